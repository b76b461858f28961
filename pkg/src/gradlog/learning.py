"""Learning from entailment.

Each training example is a (ground query, target probability) pair.  The
pipeline evaluates the query under the gradient semiring, the chain rule
multiplies the resulting gradient vector by dL/dP once, and the components
are routed to their owners: logic parameters into an SGD accumulator,
neural slots into backward calls on their models.  Updates are applied
every ``accumulation`` examples (gradient accumulation, no minibatching),
followed by clipping and per-AD renormalization of the logic parameters.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, DepthLimitError
from .grounding import decode_query
from .parser import Program, QueryExample
from .pipeline import evaluate_ground_program, prepare, run_query
from .semiring import ParameterStore
from .terms import Atom, Variable, format_atom

LOSS_EPS = 1e-12


def cross_entropy(probability: float, target: float, eps: float = LOSS_EPS):
    """Loss value and dL/dP, with the prediction clamped to [eps, 1-eps]."""
    p = min(max(probability, eps), 1.0 - eps)
    value = -(target * math.log(p) + (1.0 - target) * math.log(1.0 - p))
    derivative = -target / p + (1.0 - target) / (1.0 - p)
    return value, derivative


@dataclass
class TrainConfig:
    epochs: int = 10
    accumulation: int = 16
    logic_lr: float = 0.01
    # bound on |dL/dP| per example; the raw derivative explodes when a
    # prediction hits the clamp, which destroys training
    grad_clip: float = 1000.0
    # (start_lr, end_lr, epochs): linear warm-up applied to the logic
    # parameters only
    logic_warmup: tuple[float, float, int] | None = None
    neural_lr: dict[str, float] = field(default_factory=dict)
    default_neural_lr: float = 0.001
    seed: int = 0
    loss: str = "cross_entropy"
    shuffle: bool = True
    eval_every: int = 1
    jobs: int = 1
    depth_limit: int = 10_000
    node_budget: int = 1_000_000
    output_args: int = 1
    eval_mode: str = "auto"

    def logic_lr_at(self, epoch: int) -> float:
        if self.logic_warmup is None:
            return self.logic_lr
        start, end, span = self.logic_warmup
        if span <= 0 or epoch >= span:
            return end
        return start + (end - start) * (epoch / span)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float | None
    seconds: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)

    def to_csv(self, include_seconds: bool = False) -> str:
        # seconds are wall-clock and excluded by default so that seeded runs
        # emit byte-identical reports
        header = "epoch,loss,accuracy"
        if include_seconds:
            header += ",seconds"
        lines = [header]
        for stats in self.epochs:
            accuracy = "" if stats.accuracy is None else repr(stats.accuracy)
            row = f"{stats.epoch},{stats.loss!r},{accuracy}"
            if include_seconds:
                row += f",{stats.seconds:.3f}"
            lines.append(row)
        return "\n".join(lines) + "\n"


def train(
    program: Program,
    dataset: list[QueryExample],
    config: TrainConfig,
    runtime,
    test_dataset: list[QueryExample] | None = None,
    store: ParameterStore | None = None,
) -> tuple[ParameterStore, TrainReport]:
    """Run the training loop; mutates the runtime's models in place."""
    if not dataset:
        raise ValueError("training dataset is empty")
    if store is None:
        store = ParameterStore.from_program(program)
    if runtime is not None:
        runtime.store = store
    rng = np.random.default_rng(config.seed)
    report = TrainReport()
    n_logic = len(store.params)
    logic_acc = np.zeros(n_logic)
    window = 0

    def flush(lr_logic: float):
        nonlocal window, logic_acc
        if window == 0:
            return
        scale = 1.0 / window
        if n_logic:
            store.params -= lr_logic * scale * logic_acc
            store.renormalize()
        if runtime is not None:
            runtime.step(config.neural_lr, scale=scale, default_lr=config.default_neural_lr)
        logic_acc = np.zeros(n_logic)
        window = 0

    def example_pass(example: QueryExample):
        result = run_query(
            program,
            example.query,
            runtime=runtime,
            store=store,
            gradient=True,
            depth_limit=config.depth_limit,
            node_budget=config.node_budget,
        )
        loss_value, dldp = cross_entropy(result.probability, example.target)
        if config.grad_clip is not None:
            dldp = max(-config.grad_clip, min(config.grad_clip, dldp))
        return result, loss_value, dldp

    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = np.arange(len(dataset))
        if config.shuffle:
            rng.shuffle(order)
        lr_logic = config.logic_lr_at(epoch)
        total_loss = 0.0
        position = 0
        while position < len(order):
            chunk = [dataset[i] for i in order[position : position + config.accumulation]]
            position += len(chunk)
            if config.jobs > 1:
                with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                    passes = list(pool.map(example_pass, chunk))
            else:
                passes = [example_pass(example) for example in chunk]
            for result, loss_value, dldp in passes:
                total_loss += loss_value
                full = dldp * result.gradient
                if n_logic:
                    logic_acc += full[:n_logic]
                slot_map = result.slot_map
                for group in result.gp.groups:
                    vec = full[slot_map.group_slice(group.group_id, len(group.domain))]
                    if np.any(vec):
                        runtime.backward(group.model_id, group.inputs, vec)
                window += 1
            flush(lr_logic)
        accuracy = None
        if test_dataset and ((epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1):
            accuracy, _ = evaluate_accuracy(
                program,
                test_dataset,
                runtime,
                store=store,
                output_args=config.output_args,
                mode=config.eval_mode,
            )
        report.epochs.append(
            EpochStats(epoch, total_loss / len(dataset), accuracy, time.perf_counter() - started)
        )
    return store, report


# --- accuracy -----------------------------------------------------------------------


def output_template(query: Atom, output_args: int) -> Atom:
    """The labeled query with its trailing output arguments freed."""
    if output_args < 1 or output_args > len(query.args):
        raise ValueError(f"cannot free {output_args} arguments of {format_atom(query)}")
    args = list(query.args)
    for k in range(len(args) - output_args, len(args)):
        args[k] = Variable(f"_Out{k}")
    return Atom(query.predicate, args)


def predict(
    program: Program,
    query: Atom,
    runtime,
    store: ParameterStore,
    output_args: int = 1,
    mode: str = "auto",
    exact_candidate_cap: int = 40,
    exact_rule_budget: int = 50_000,
    exact_work_budget: int = 4_000,
    depth_limit: int = 10_000,
) -> Atom | None:
    """Most probable completion of the query's output arguments.

    ``exact`` enumerates every derivable completion and compares compiled
    probabilities; ``decode`` follows the single most likely branch of every
    probabilistic choice, which scales to sequence outputs.  ``auto`` tries
    exact first and falls back when the candidate set is unbounded.
    """
    template = output_template(query, output_args)
    if mode in ("exact", "auto"):
        try:
            gp = prepare(
                program,
                template,
                runtime,
                depth_limit=depth_limit,
                max_rules=exact_rule_budget,
                max_work=exact_work_budget,
                allow_nonground_query=True,
            )
            answers = gp.answers
            if len(answers) <= exact_candidate_cap:
                best, best_p = None, -1.0
                for answer in answers:
                    result = evaluate_ground_program(gp, answer, store)
                    if result.probability > best_p:
                        best, best_p = answer, result.probability
                return best
            if mode == "exact":
                raise BudgetError(
                    f"{len(answers)} candidate outputs exceed the exact cap"
                )
        except (BudgetError, DepthLimitError):
            if mode == "exact":
                raise
    return decode_query(program, template, runtime, depth_limit=depth_limit)


def evaluate_accuracy(
    program: Program,
    dataset: list[QueryExample],
    runtime,
    store: ParameterStore | None = None,
    output_args: int = 1,
    mode: str = "auto",
    **kwargs,
) -> tuple[float, float]:
    """Accuracy and macro-F1 of predicted outputs against the labels.

    Only positive examples (target >= 0.5) carry an output label to score.
    """
    if store is None:
        store = ParameterStore.from_program(program)
    if runtime is not None:
        runtime.store = store
    scored = [ex for ex in dataset if ex.target >= 0.5]
    if not scored:
        return 0.0, 0.0
    correct = 0
    pairs: list[tuple[object, object]] = []
    for example in scored:
        prediction = predict(
            program,
            example.query,
            runtime,
            store,
            output_args=output_args,
            mode=mode,
            **kwargs,
        )
        truth = _output_key(example.query, output_args)
        predicted = _output_key(prediction, output_args) if prediction is not None else None
        pairs.append((predicted, truth))
        if predicted == truth:
            correct += 1
    if runtime is not None:
        runtime.clear_cache()
    return correct / len(scored), macro_f1(pairs)


def _output_key(atom: Atom, output_args: int):
    return tuple(str(t) for t in atom.args[len(atom.args) - output_args :])


def macro_f1(pairs: list[tuple[object, object]]) -> float:
    """Unweighted mean F1 over the label classes."""
    classes = {truth for _, truth in pairs}
    scores = []
    for cls in classes:
        tp = sum(1 for p, t in pairs if p == cls and t == cls)
        fp = sum(1 for p, t in pairs if p == cls and t != cls)
        fn = sum(1 for p, t in pairs if p != cls and t == cls)
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return sum(scores) / len(scores) if scores else 0.0
