"""Bundled example programs and synthetic dataset generators.

The digit-image tasks replace real images with 16-dimensional Gaussian
prototype vectors (one prototype per class, noise sigma 0.1 by default):
large enough for a small MLP to separate, small enough for second-scale
training.  Colour inputs are RGB triples around the pure base colours.

Each generator returns program text, train/test example lines, the vector
sidecar, a model configuration, and ground-truth metadata (for checking
learned parameters against the generating distributions).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BURGLARY = """\
% alarm network with two independent causes
0.1::burglary.
0.2::earthquake.
0.5::hears_alarm(mary).
0.4::hears_alarm(john).
alarm :- earthquake.
alarm :- burglary.
calls(X) :- alarm, hears_alarm(X).
query(calls(mary)).
"""

BURGLARY_LEARNABLE = """\
t(0.2)::earthquake.
t(0.1)::burglary.
0.5::hears_alarm(mary).
alarm :- earthquake.
alarm :- burglary.
calls(X) :- alarm, hears_alarm(X).
query(calls(mary)).
"""

COIN_GAME = """\
% two coins and an urn; win on any head or a red ball
flip(coin1).
flip(coin2).
nn(m_side,C,[heads,tails])::side(C,heads);side(C,tails).
t(0.5)::red;t(0.5)::blue.
heads :- flip(X), side(X,heads).
win :- heads.
win :- \\+heads, red.
query(win).
"""

COIN_GAME_MODELS = {
    "m_side": {
        "type": "table",
        "outputs": 2,
        "entries": {"coin1": [0.9, 0.1], "coin2": [0.2, 0.8]},
    }
}

T1_PROGRAM = """\
nn(m_digit, X, [0,...,9]) :: digit(X,0);...;digit(X,9).
addition(X,Y,Z) :- digit(X,X2), digit(Y,Y2), Z is X2+Y2.
"""

T2_PROGRAM = """\
nn(m_digit, X, [0,...,9]) :: digit(X,0);...;digit(X,9).
number([],Result,Result).
number([H|T],Acc,Result) :-
    digit(H,Nr),
    Acc2 is Nr+10*Acc,
    number(T,Acc2,Result).
number(X,Y) :- number(X,0,Y).
multi_addition(X,Y,Z) :- number(X,X2), number(Y,Y2), Z is X2+Y2.
"""

T3_PROGRAM = """\
nn(m_result,D1,D2,Carry,[0,...,9])::result(D1,D2,Carry,0);...;result(D1,D2,Carry,9).
nn(m_carry,D1,D2,Carry,[0,1])::carry(D1,D2,Carry,0);carry(D1,D2,Carry,1).

slot(I1,I2,Carry,NewCarry,Result) :-
    result(I1,I2,Carry,Result),
    carry(I1,I2,Carry,NewCarry).

add([],[],[C],C,[]).
add([H1|T1],[H2|T2],C,Carry,[Digit|Res]) :-
    add(T1,T2,C,NewCarry,Res),
    slot(H1,H2,NewCarry,Carry,Digit).
"""

# The printed sorting sketch gives the swap network a single input; sorting
# needs the compared pair, so the bundled program feeds it both digits.
T4_PROGRAM = """\
nn(m_swap, X, Y, [0,1])::swap(X,Y,0);swap(X,Y,1).

hole(X,Y,X,Y):-
    swap(X,Y,0).
hole(X,Y,Y,X):-
    swap(X,Y,1).

bubble([X],[],X).
bubble([H1,H2|T],[X1|T1],X):-
    hole(H1,H2,X1,X2),
    bubble([X2|T],T1,X).

bubblesort([],L,L).
bubblesort(L,L3,Sorted) :-
    bubble(L,L2,X),
    bubblesort(L2,[X|L3],Sorted).

sort(L,L2) :- bubblesort(L,[],L2).
"""

# The printed coin-ball listing declares colour/4 but uses colour/2 in the
# urn rule; the bundled program feeds the colour network one RGB vector.
T6_PROGRAM = """\
nn(m_colour, X, [red,green,blue])::colour(X,red);colour(X,green);colour(X,blue).
nn(m_coin, Coin, [heads,tails])::coin(Coin,heads);coin(Coin,tails).

t(0.5)::col(1,red);t(0.5)::col(1,blue).
t(0.333)::col(2,red);t(0.333)::col(2,green);t(0.333)::col(2,blue).
t(0.5)::is_heads.

outcome(heads,red,_,win).
outcome(heads,_,red,win).
outcome(_,C,C,win).
outcome(Coin,Colour1,Colour2,loss) :- \\+outcome(Coin,Colour1,Colour2,win).

game(Coin,Urn1,Urn2,Result) :-
    coin(Coin,Side),
    urn(1,Urn1,C1),
    urn(2,Urn2,C2),
    outcome(Side,C1,C2,Result).

urn(ID,Colour,C) :-
    col(ID,C),
    colour(Colour,C).

coin(Coin,heads) :-
    coin(Coin,heads),
    is_heads.
coin(Coin,tails) :-
    coin(Coin,tails),
    \\+is_heads.
"""

PROGRAMS = {
    "burglary": BURGLARY,
    "burglary-learnable": BURGLARY_LEARNABLE,
    "coin": COIN_GAME,
    "t1": T1_PROGRAM,
    "t2": T2_PROGRAM,
    "t3": T3_PROGRAM,
    "t4": T4_PROGRAM,
    "t6": T6_PROGRAM,
}

FEATURE_DIM = 16
NOISE_SIGMA = 0.1
RGB_SIGMA = 0.03
BASE_COLOURS = {"red": (1.0, 0.0, 0.0), "green": (0.0, 1.0, 0.0), "blue": (0.0, 0.0, 1.0)}


@dataclass
class GeneratedTask:
    name: str
    program: str
    train: list[str]
    test: list[str]
    vectors: dict[str, list[float]] = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    output_args: int = 1

    def write(self, outdir: str | Path) -> Path:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / f"{self.name}.dpl").write_text(self.program)
        (outdir / "train.queries").write_text("\n".join(self.train) + "\n" if self.train else "")
        (outdir / "test.queries").write_text("\n".join(self.test) + "\n" if self.test else "")
        if self.vectors:
            lines = [
                f"{symbol} " + " ".join(repr(v) for v in vec)
                for symbol, vec in self.vectors.items()
            ]
            (outdir / "vectors.txt").write_text("\n".join(lines) + "\n")
        if self.models:
            (outdir / "models.json").write_text(json.dumps(self.models, indent=2) + "\n")
        meta = dict(self.meta)
        meta["output_args"] = self.output_args
        (outdir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
        return outdir


def digit_prototypes(rng: np.random.Generator, dim: int = FEATURE_DIM) -> np.ndarray:
    return rng.normal(0.0, 1.0, size=(10, dim))


def _digit_vector(prototypes, rng, cls: int, sigma: float = NOISE_SIGMA):
    return prototypes[cls] + rng.normal(0.0, sigma, size=prototypes.shape[1])


def _digit_model(seed: int, hidden=(32,), lr: float = 0.003) -> dict:
    return {
        "type": "mlp",
        "inputs": [{"kind": "vector", "size": FEATURE_DIM}],
        "hidden": list(hidden),
        "outputs": 10,
        "seed": seed,
        "optimizer": "adam",
        "lr": lr,
    }


def gen_t1(n: int, seed: int = 0, n_test: int = 200, n_probe: int = 500) -> GeneratedTask:
    """Pairs of digit vectors labeled only with their sum."""
    if n < 1:
        raise ValueError("need at least one training example")
    rng = np.random.default_rng(seed)
    prototypes = digit_prototypes(rng)
    vectors: dict[str, list[float]] = {}
    classes: dict[str, int] = {}
    probe_labels: dict[str, int] = {}

    def emit(split: str, count: int) -> list[str]:
        lines = []
        for i in range(count):
            a, b = int(rng.integers(0, 10)), int(rng.integers(0, 10))
            sa, sb = f"{split}{i}a", f"{split}{i}b"
            vectors[sa] = _digit_vector(prototypes, rng, a).tolist()
            vectors[sb] = _digit_vector(prototypes, rng, b).tolist()
            classes[sa], classes[sb] = a, b
            lines.append(f"addition({sa},{sb},{a + b}) 1.0")
        return lines

    train = emit("tr", n)
    test = emit("te", n_test)
    for i in range(n_probe):
        cls = int(rng.integers(0, 10))
        symbol = f"probe{i}"
        vectors[symbol] = _digit_vector(prototypes, rng, cls).tolist()
        probe_labels[symbol] = cls
        classes[symbol] = cls
    return GeneratedTask(
        name="t1",
        program=T1_PROGRAM,
        train=train,
        test=test,
        vectors=vectors,
        models={"m_digit": _digit_model(seed)},
        meta={
            "probe_labels": probe_labels,
            "symbol_classes": classes,
            "prototype_seed": seed,
        },
    )


def _number_value(digits: list[int]) -> int:
    value = 0
    for d in digits:
        value = value * 10 + d
    return value


def gen_t2(
    n: int,
    digits_per_number: int = 1,
    seed: int = 0,
    n_test: int = 100,
    test_digits: int = 3,
) -> GeneratedTask:
    """Multi-digit sums; train on short numbers, test on longer ones."""
    if digits_per_number < 1:
        raise ValueError("numbers need at least one digit")
    rng = np.random.default_rng(seed)
    prototypes = digit_prototypes(rng)
    vectors: dict[str, list[float]] = {}
    classes: dict[str, int] = {}

    def emit(split: str, count: int, length: int) -> list[str]:
        lines = []
        for i in range(count):
            da = [int(rng.integers(0, 10)) for _ in range(length)]
            db = [int(rng.integers(0, 10)) for _ in range(length)]
            sa, sb = [], []
            for j, d in enumerate(da):
                s = f"{split}{i}a{j}"
                vectors[s] = _digit_vector(prototypes, rng, d).tolist()
                classes[s] = d
                sa.append(s)
            for j, d in enumerate(db):
                s = f"{split}{i}b{j}"
                vectors[s] = _digit_vector(prototypes, rng, d).tolist()
                classes[s] = d
                sb.append(s)
            total = _number_value(da) + _number_value(db)
            lines.append(
                f"multi_addition([{','.join(sa)}],[{','.join(sb)}],{total}) 1.0"
            )
        return lines

    train = emit("tr", n, digits_per_number)
    test = emit("te", n_test, test_digits)
    return GeneratedTask(
        name="t2",
        program=T2_PROGRAM,
        train=train,
        test=test,
        vectors=vectors,
        models={"m_digit": _digit_model(seed)},
        meta={
            "train_digits": digits_per_number,
            "test_digits": test_digits,
            "symbol_classes": classes,
        },
    )


def _school_addition(da: list[int], db: list[int], carry_in: int = 0):
    """Grade-school addition, most significant digit first."""
    result = [0] * len(da)
    carry = carry_in
    for k in range(len(da) - 1, -1, -1):
        total = da[k] + db[k] + carry
        result[k] = total % 10
        carry = total // 10
    return result, carry


def gen_t3(
    n: int,
    num_digits: int = 2,
    seed: int = 0,
    n_test: int = 64,
    test_digits: tuple[int, ...] = (8, 64),
) -> GeneratedTask:
    """Digit-sequence addition with a carry hole (symbolic one-hot digits)."""
    rng = np.random.default_rng(seed)

    def emit(count: int, length: int) -> list[str]:
        lines = []
        for _ in range(count):
            da = [int(rng.integers(0, 10)) for _ in range(length)]
            db = [int(rng.integers(0, 10)) for _ in range(length)]
            result, carry = _school_addition(da, db)
            lines.append(
                "add([{}],[{}],[0],{},[{}]) 1.0".format(
                    ",".join(map(str, da)),
                    ",".join(map(str, db)),
                    carry,
                    ",".join(map(str, result)),
                )
            )
        return lines

    train = emit(n, num_digits)
    test = []
    for length in test_digits:
        test.extend(emit(n_test, length))
    onehot_digit = {"kind": "onehot", "size": 10}
    onehot_carry = {"kind": "onehot", "size": 2}
    models = {
        # the result table is modular addition, which small nets memorize
        # slowly; it needs the aggressive rate
        "m_result": {
            "type": "mlp",
            "inputs": [onehot_digit, onehot_digit, onehot_carry],
            "hidden": [96],
            "outputs": 10,
            "seed": seed,
            "optimizer": "adam",
            "lr": 0.03,
        },
        "m_carry": {
            "type": "mlp",
            "inputs": [onehot_digit, onehot_digit, onehot_carry],
            "hidden": [32],
            "outputs": 2,
            "seed": seed + 1,
            "optimizer": "adam",
            "lr": 0.01,
        },
    }
    return GeneratedTask(
        name="t3",
        program=T3_PROGRAM,
        train=train,
        test=test,
        models=models,
        meta={"train_digits": num_digits, "test_digits": list(test_digits)},
        output_args=2,
    )


def gen_t4(
    n: int,
    list_lengths: tuple[int, ...] = (2, 3, 4),
    seed: int = 0,
    n_test: int = 64,
    test_lengths: tuple[int, ...] = (8, 64),
) -> GeneratedTask:
    """Sorting with a neural compare-and-swap hole."""
    rng = np.random.default_rng(seed)

    def emit(count: int, length: int) -> list[str]:
        lines = []
        for _ in range(count):
            values = [int(rng.integers(0, 10)) for _ in range(length)]
            lines.append(
                "sort([{}],[{}]) 1.0".format(
                    ",".join(map(str, values)),
                    ",".join(map(str, sorted(values))),
                )
            )
        return lines

    train = []
    for length in list_lengths:
        train.extend(emit(n, length))
    test = []
    for length in test_lengths:
        test.extend(emit(n_test, length))
    onehot_digit = {"kind": "onehot", "size": 10}
    models = {
        "m_swap": {
            "type": "mlp",
            "inputs": [onehot_digit, onehot_digit],
            "hidden": [32],
            "outputs": 2,
            "seed": seed,
            "optimizer": "adam",
            "lr": 0.01,
        }
    }
    return GeneratedTask(
        name="t4",
        program=T4_PROGRAM,
        train=train,
        test=test,
        models=models,
        meta={"train_lengths": list(list_lengths), "test_lengths": list(test_lengths)},
    )


T6_TRUE_HEADS = 0.5
T6_TRUE_URN1 = {"red": 0.6, "blue": 0.4}
T6_TRUE_URN2 = {"red": 0.35, "green": 0.35, "blue": 0.3}


def _game_outcome(side: str, c1: str, c2: str) -> str:
    if side == "heads" and (c1 == "red" or c2 == "red"):
        return "win"
    if c1 == c2:
        return "win"
    return "loss"


def gen_t6(n_train: int = 256, n_test: int = 64, seed: int = 0) -> GeneratedTask:
    """The coin-ball game: a coin image and two noisy RGB ball observations."""
    rng = np.random.default_rng(seed)
    prototypes = digit_prototypes(rng)
    vectors: dict[str, list[float]] = {}
    truth: dict[str, str] = {}
    counts = {"heads": 0, "urn1": {c: 0 for c in T6_TRUE_URN1}, "urn2": {c: 0 for c in T6_TRUE_URN2}}

    def draw_colour(dist: dict[str, float]) -> str:
        names = list(dist)
        return names[rng.choice(len(names), p=[dist[c] for c in names])]

    def emit(split: str, count: int, record: bool) -> list[str]:
        lines = []
        for i in range(count):
            side = "heads" if rng.random() < T6_TRUE_HEADS else "tails"
            # even digit classes play heads, odd classes tails
            cls = int(rng.choice([0, 2, 4, 6, 8] if side == "heads" else [1, 3, 5, 7, 9]))
            coin_sym = f"{split}{i}c"
            vectors[coin_sym] = _digit_vector(prototypes, rng, cls).tolist()
            truth[coin_sym] = side
            c1 = draw_colour(T6_TRUE_URN1)
            c2 = draw_colour(T6_TRUE_URN2)
            for urn, colour in (("u1", c1), ("u2", c2)):
                sym = f"{split}{i}{urn}"
                base = np.array(BASE_COLOURS[colour])
                vectors[sym] = (base + rng.normal(0.0, RGB_SIGMA, size=3)).tolist()
                truth[sym] = colour
            if record:
                counts["heads"] += side == "heads"
                counts["urn1"][c1] += 1
                counts["urn2"][c2] += 1
            outcome = _game_outcome(side, c1, c2)
            lines.append(f"game({split}{i}c,{split}{i}u1,{split}{i}u2,{outcome}) 1.0")
        return lines

    train = emit("tr", n_train, record=True)
    test = emit("te", n_test, record=False)
    meta = {
        "symbol_truth": truth,
        "true": {"heads": T6_TRUE_HEADS, "urn1": T6_TRUE_URN1, "urn2": T6_TRUE_URN2},
        "empirical_train": {
            "heads": counts["heads"] / n_train,
            "urn1": {c: counts["urn1"][c] / n_train for c in counts["urn1"]},
            "urn2": {c: counts["urn2"][c] / n_train for c in counts["urn2"]},
        },
    }
    models = {
        "m_coin": {
            "type": "mlp",
            "inputs": [{"kind": "vector", "size": FEATURE_DIM}],
            "hidden": [16],
            "outputs": 2,
            "seed": seed,
            "optimizer": "adam",
            "lr": 0.03,
        },
        # a small hidden layer gives the colour net room to escape the
        # permuted-labeling basin that traps a purely linear map
        "m_colour": {
            "type": "mlp",
            "inputs": [{"kind": "vector", "size": 3}],
            "hidden": [8],
            "outputs": 3,
            "seed": seed + 1,
            "optimizer": "adam",
            "lr": 0.1,
        },
    }
    return GeneratedTask(
        name="t6",
        program=T6_PROGRAM,
        train=train,
        test=test,
        vectors=vectors,
        models=models,
        meta=meta,
    )


GENERATORS = {
    "t1": gen_t1,
    "t2": gen_t2,
    "t3": gen_t3,
    "t4": gen_t4,
    "t6": gen_t6,
}
