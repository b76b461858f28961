"""Command-line interface.

Subcommands mirror the pipeline stages: ``parse``, ``ground``, ``compile``,
``query``, ``export-dot``, ``learn``, plus ``gen-data`` for the bundled
synthetic tasks.  Errors print one ``<class>: <message>`` line on stderr and
exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import circuit as circuit_mod
from . import oracle, tasks
from .errors import GradlogError, ParseError
from .grounding import ground, ground_program_to_text
from .learning import TrainConfig, train
from .neural import NeuralRuntime, runtime_from_config
from .parser import (
    Program,
    parse_dataset,
    parse_program,
    parse_query,
    parse_vectors,
    program_to_text,
)
from .pipeline import evaluate_ground_program, prepare, var_names_for
from .semiring import Labeling, ParameterStore
from .terms import format_atom


def main(argv=None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except GradlogError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io-error: {exc}", file=sys.stderr)
        return 1


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradlog",
        description="probabilistic logic programs with trainable neural predicates",
    )
    sub = parser.add_subparsers(required=True)

    def add(name, handler, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        return p

    p = add("parse", cmd_parse, "parse a program and pretty-print it")
    p.add_argument("program")

    for name, handler, help_text in (
        ("ground", cmd_ground, "print the query-directed ground program"),
        ("compile", cmd_compile, "compile a query and print the circuit as DOT"),
        ("export-dot", cmd_export_dot, "compile and print an annotated circuit as DOT"),
        ("query", cmd_query, "print the success probability of a query"),
    ):
        p = add(name, handler, help_text)
        p.add_argument("program")
        p.add_argument("query", nargs="?", help="query atom; defaults to query/1 directives")
        _add_model_args(p)
        p.add_argument("--order", help="comma-separated variable names to order first")
        if name == "query":
            p.add_argument("--grad", action="store_true", help="also print the gradient")
            p.add_argument(
                "--exact-enum",
                action="store_true",
                help="cross-check with brute-force world enumeration",
            )

    p = add("learn", cmd_learn, "train logic parameters and neural models")
    p.add_argument("program")
    p.add_argument("--data", required=True, help="training .queries file")
    p.add_argument("--test", help="held-out .queries file")
    _add_model_args(p)
    p.add_argument("--config", help="key = value training configuration file")
    p.add_argument("--out", default="run", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--output-args", type=int, help="trailing output arguments for accuracy")
    p.add_argument("--timing", action="store_true", help="include wall-clock seconds in the CSV")

    p = add("gen-data", cmd_gen_data, "generate a bundled program and synthetic datasets")
    p.add_argument("task", choices=sorted(set(tasks.PROGRAMS) | set(tasks.GENERATORS)))
    p.add_argument("--out", default=None, help="output directory (default: the task name)")
    p.add_argument("--n", type=int, default=1000, help="training examples (per length)")
    p.add_argument("--n-test", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _add_model_args(p: argparse.ArgumentParser):
    p.add_argument("--models", help="models.json describing neural predicates")
    p.add_argument("--vectors", help="vector sidecar file (symbol v1 v2 ...)")
    p.add_argument("--params", help="logic parameter file to load")
    p.add_argument("--bridge", help="command line of an external model server")
    p.add_argument("--jobs", type=int, default=1, help=argparse.SUPPRESS)


def _load_program(path: str) -> Program:
    return parse_program(Path(path).read_text())


def _load_runtime(args) -> NeuralRuntime | None:
    vectors = parse_vectors(Path(args.vectors).read_text()) if args.vectors else {}
    if args.models:
        config = json.loads(Path(args.models).read_text())
        return runtime_from_config(config, vectors, bridge_command=args.bridge)
    if vectors:
        return NeuralRuntime(vectors)
    return None


def _load_store(program: Program, args) -> ParameterStore:
    store = ParameterStore.from_program(program)
    if getattr(args, "params", None):
        load_params(store, Path(args.params).read_text())
    return store


def _queries(program: Program, args):
    if args.query:
        return [parse_query(args.query)]
    if not program.queries:
        raise ParseError("no query given and the program has no query/1 directives")
    return list(program.queries)


def _order_refs(gp, order_arg: str | None):
    if not order_arg:
        return None
    names = {v: k for k, v in var_names_for(gp).items()}
    listed = []
    for raw in order_arg.split(","):
        name = raw.strip()
        if name not in names:
            raise ParseError(f"--order names unknown variable {name!r}")
        listed.append(names[name])
    return listed


def _prepare_with_order(program, query, runtime, store, args, gradient=False):
    gp = prepare(program, query, runtime)
    order = None
    if getattr(args, "order", None):
        from .transform import build_formula

        builder, root = build_formula(gp, query)
        default = circuit_mod.default_order(builder, root)
        listed = _order_refs(gp, args.order)
        order = listed + [ref for ref in default if ref not in listed]
    return evaluate_ground_program(gp, query, store, gradient=gradient, order=order)


def cmd_parse(args) -> int:
    print(program_to_text(_load_program(args.program)), end="")
    return 0


def cmd_ground(args) -> int:
    program = _load_program(args.program)
    runtime = _load_runtime(args)
    store = _load_store(program, args)
    for query in _queries(program, args):
        gp = ground(program, query, runtime)
        print(ground_program_to_text(gp, params=store.params), end="")
    return 0


def cmd_compile(args) -> int:
    return _emit_dot(args, annotate=False)


def cmd_export_dot(args) -> int:
    return _emit_dot(args, annotate=True)


def _emit_dot(args, annotate: bool) -> int:
    program = _load_program(args.program)
    runtime = _load_runtime(args)
    store = _load_store(program, args)
    for query in _queries(program, args):
        result = _prepare_with_order(program, query, runtime, store, args)
        labeling = Labeling(result.gp, store) if annotate else None
        print(
            circuit_mod.export_dot(
                result.circuit, labeling=labeling, var_names=var_names_for(result.gp)
            ),
            end="",
        )
    return 0


def cmd_query(args) -> int:
    program = _load_program(args.program)
    runtime = _load_runtime(args)
    store = _load_store(program, args)
    if runtime is not None:
        runtime.store = store
    for query in _queries(program, args):
        result = _prepare_with_order(
            program, query, runtime, store, args, gradient=args.grad
        )
        print(f"P({format_atom(query)}) = {result.probability:.12g}")
        if args.grad:
            for name, value in _gradient_lines(result, store):
                print(f"  d/d[{name}] = {value:.12g}")
        if args.exact_enum:
            exact = oracle.enumerate_probability(result.gp, query, params=store.params)
            print(f"P_enum({format_atom(query)}) = {exact:.12g}")
            if abs(exact - result.probability) > 1e-9:
                print("exact-enum-mismatch", file=sys.stderr)
                return 1
    return 0


def _gradient_lines(result, store):
    lines = []
    for index, name in enumerate(store.names):
        lines.append((name, float(result.gradient[index])))
    slot_map = result.slot_map
    for group in result.gp.groups:
        for k, value_term in enumerate(group.domain):
            slot = slot_map.slot(group.group_id, k)
            name = (
                f"{group.model_id}({','.join(map(str, group.inputs))})"
                f"[{value_term}]"
            )
            lines.append((name, float(result.gradient[slot])))
    return lines


def cmd_learn(args) -> int:
    program = _load_program(args.program)
    runtime = _load_runtime(args)
    store = _load_store(program, args)
    dataset = parse_dataset(Path(args.data).read_text())
    test_dataset = parse_dataset(Path(args.test).read_text()) if args.test else None
    config = TrainConfig()
    if args.config:
        apply_config_file(config, Path(args.config).read_text())
    if args.seed is not None:
        config.seed = args.seed
    if args.epochs is not None:
        config.epochs = args.epochs
    if args.output_args is not None:
        config.output_args = args.output_args
    config.jobs = args.jobs
    store, report = train(
        program, dataset, config, runtime, test_dataset=test_dataset, store=store
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.csv").write_text(report.to_csv(include_seconds=args.timing))
    (outdir / "params.txt").write_text(dump_params(store))
    if runtime is not None:
        trained = {
            model_id: entry.model.to_config()
            for model_id, entry in runtime.entries.items()
            if hasattr(entry.model, "to_config")
        }
        (outdir / "models-trained.json").write_text(json.dumps(trained) + "\n")
    for stats in report.epochs:
        accuracy = "" if stats.accuracy is None else f" accuracy={stats.accuracy:.4f}"
        print(f"epoch {stats.epoch}: loss={stats.loss:.6f}{accuracy}")
    return 0


def cmd_gen_data(args) -> int:
    outdir = Path(args.out or args.task)
    if args.task in tasks.GENERATORS:
        kwargs = {"seed": args.seed}
        if args.task == "t6":
            kwargs["n_train"] = args.n if args.n != 1000 else 256
            if args.n_test is not None:
                kwargs["n_test"] = args.n_test
        else:
            kwargs["n"] = args.n
            if args.n_test is not None:
                kwargs["n_test"] = args.n_test
        task = tasks.GENERATORS[args.task](**kwargs)
        task.write(outdir)
    else:
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / f"{args.task}.dpl").write_text(tasks.PROGRAMS[args.task])
        if args.task == "coin":
            (outdir / "models.json").write_text(
                json.dumps(tasks.COIN_GAME_MODELS, indent=2) + "\n"
            )
    print(f"wrote {outdir}/")
    return 0


# --- parameter and config files ----------------------------------------------------


def dump_params(store: ParameterStore) -> str:
    """One line per parameter group: names, '=', current values."""
    grouped = {i for group in store.groups for i in group}
    lines = []
    for index, name in enumerate(store.names):
        if index not in grouped:
            lines.append(f"{name} = {float(store.params[index])!r}")
    for group in store.groups:
        names = " ".join(store.names[i] for i in group)
        values = " ".join(repr(float(store.params[i])) for i in group)
        lines.append(f"{names} = {values}")
    return "\n".join(lines) + ("\n" if lines else "")


def load_params(store: ParameterStore, text: str):
    """Load values written by :func:`dump_params` (same program required)."""
    grouped = {i for group in store.groups for i in group}
    sequence = [i for i in range(len(store.params)) if i not in grouped]
    for group in store.groups:
        sequence.extend(group)
    values: list[float] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        _, _, value_part = line.partition("=")
        values.extend(float(v) for v in value_part.split())
    if len(values) != len(store.params):
        raise ParseError(
            f"parameter file has {len(values)} values, program has {len(store.params)}"
        )
    for index, value in zip(sequence, values):
        store.params[index] = value


def apply_config_file(config: TrainConfig, text: str):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "epochs":
            config.epochs = int(value)
        elif key == "accumulation":
            config.accumulation = int(value)
        elif key == "logic_lr":
            config.logic_lr = float(value)
        elif key == "logic_warmup":
            start, end, span = value.split()
            config.logic_warmup = (float(start), float(end), int(span))
        elif key.startswith("neural_lr."):
            config.neural_lr[key.split(".", 1)[1]] = float(value)
        elif key == "default_neural_lr":
            config.default_neural_lr = float(value)
        elif key == "seed":
            config.seed = int(value)
        elif key == "loss":
            config.loss = value
        elif key == "shuffle":
            config.shuffle = value.lower() in ("1", "true", "yes")
        elif key == "accumulation_size":
            config.accumulation = int(value)
        elif key == "output_args":
            config.output_args = int(value)
        elif key == "eval_mode":
            config.eval_mode = value
        elif key == "eval_every":
            config.eval_every = int(value)
        elif key == "grad_clip":
            config.grad_clip = None if value == "none" else float(value)
        elif key == "epochs_between_eval":
            config.eval_every = int(value)
        else:
            raise ParseError(f"unknown configuration key {key!r}")


if __name__ == "__main__":
    sys.exit(main())
