"""Commutative semirings and fact labeling.

The probability semiring computes query success probabilities; the gradient
semiring computes pairs ``(p, dp/dx)`` over the concatenated parameter vector
(learnable logic parameters first, then one slot per neural outcome active in
the current ground program).  Both semirings perform the probability-component
arithmetic with identical expressions so their first components agree bitwise.

Every circuit variable is binary: ordinary facts, chain variables of
annotated disjunctions, and chain variables of neural groups.  Chain labels
carry the quotient-rule gradient of ``p_k / (1 - sum(p_:k))`` so that the
evaluated gradient is exact for the underlying group parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateAdError, LabelError
from .grounding import AdChainLabel, FixedLabel, GroundProgram, LearnableLabel
from .parser import Program

EPSILON = 1e-12
_TINY_DENOM = 1e-12


class ProbabilitySemiring:
    """Plain sum/product over floats."""

    name = "probability"

    def zero(self):
        return 0.0

    def one(self):
        return 1.0

    def add(self, a, b):
        return a + b

    def mul(self, a, b):
        return a * b


class GradientSemiring:
    """Pairs (p, grad) with the product rule on multiplication."""

    name = "gradient"

    def __init__(self, n_params: int):
        self.n_params = n_params

    def zero(self):
        return (0.0, np.zeros(self.n_params))

    def one(self):
        return (1.0, np.zeros(self.n_params))

    def add(self, a, b):
        return (a[0] + b[0], a[1] + b[1])

    def mul(self, a, b):
        return (a[0] * b[0], b[0] * a[1] + a[0] * b[1])


def oplus(a, b):
    """Semiring addition on explicit (p, grad) pairs."""
    _check_lengths(a, b)
    return (a[0] + b[0], a[1] + b[1])


def otimes(a, b):
    """Semiring multiplication on explicit (p, grad) pairs."""
    _check_lengths(a, b)
    return (a[0] * b[0], b[0] * a[1] + a[0] * b[1])


def _check_lengths(a, b):
    if len(a[1]) != len(b[1]):
        raise ValueError(f"gradient length mismatch: {len(a[1])} vs {len(b[1])}")


@dataclass
class ParameterStore:
    """Learnable logic parameters, grouped by AD membership."""

    params: np.ndarray
    groups: list[list[int]]
    names: list[str]

    @classmethod
    def from_program(cls, program: Program) -> "ParameterStore":
        return cls(
            params=np.array(program.param_init, dtype=np.float64),
            groups=[list(g) for g in program.param_groups],
            names=list(program.param_names),
        )

    def copy(self) -> "ParameterStore":
        return ParameterStore(self.params.copy(), [list(g) for g in self.groups], list(self.names))

    def renormalize(self, eps: float = EPSILON):
        """Clip to [eps, 1-eps], then rescale each AD group to sum to one."""
        np.clip(self.params, eps, 1.0 - eps, out=self.params)
        for group in self.groups:
            idx = np.array(group)
            total = float(self.params[idx].sum())
            self.params[idx] = self.params[idx] / total


@dataclass
class SlotMap:
    """Layout of the gradient vector for one ground program."""

    n_logic: int
    group_offsets: dict[int, int] = field(default_factory=dict)
    entries: list[tuple[int, int]] = field(default_factory=list)  # (group_id, outcome)

    @property
    def n_total(self) -> int:
        return self.n_logic + len(self.entries)

    def slot(self, group_id: int, outcome: int) -> int:
        return self.n_logic + self.group_offsets[group_id] + outcome

    def group_slice(self, group_id: int, size: int) -> slice:
        start = self.n_logic + self.group_offsets[group_id]
        return slice(start, start + size)


def slot_map_for(gp: GroundProgram, n_logic: int) -> SlotMap:
    """Neural outcomes get contiguous slots after the logic parameters."""
    sm = SlotMap(n_logic=n_logic)
    for group in gp.groups:
        sm.group_offsets[group.group_id] = len(sm.entries)
        for k in range(len(group.domain)):
            sm.entries.append((group.group_id, k))
    return sm


class Labeling:
    """Semiring labels for the variables of a compiled ground program.

    Variable refs are ``("fact", fact_id)`` for ordinary facts and
    ``("nchain", group_id, k)`` for the k-th chain variable of a neural
    group.  Labels follow the standard seeding: fixed facts carry a zero
    gradient, learnable facts a basis vector, negative literals the negated
    gradient; neural chain variables are seeded with the quotient-rule
    Jacobian so the result is exact in the network's output coordinates,
    which stay constant during circuit evaluation.
    """

    def __init__(self, gp: GroundProgram, store: ParameterStore, gradient: bool = False):
        self.gp = gp
        self.store = store
        self.gradient = gradient
        self.slot_map = slot_map_for(gp, len(store.params))
        self.semiring = (
            GradientSemiring(self.slot_map.n_total) if gradient else ProbabilitySemiring()
        )
        self._cache: dict = {}

    # -- probabilities -----------------------------------------------------

    def fact_probability(self, fact_id: int) -> float:
        source = self.gp.facts[fact_id].source
        if isinstance(source, FixedLabel):
            return source.p
        if isinstance(source, LearnableLabel):
            return float(self.store.params[source.index])
        return self._ad_chain(source)[0]

    def _ad_chain(self, source: AdChainLabel):
        params = self.store.params
        idx = source.param_indices
        k = source.position
        used = sum(float(params[i]) for i in idx[:k])
        denom = 1.0 - used
        if denom <= 0.0:
            raise DegenerateAdError(
                f"annotated disjunction leaves no mass for head {k} "
                f"(earlier heads sum to {used})"
            )
        return float(params[idx[k]]) / denom, denom

    def _neural_chain(self, group_id: int, k: int):
        dist = self.gp.groups[group_id].distribution
        denom = 1.0 - sum(dist[:k])
        if denom <= 0.0:
            denom = _TINY_DENOM
        return dist[k] / denom, denom

    # -- semiring labels -----------------------------------------------------

    def label(self, ref, positive: bool):
        key = (ref, positive)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        if ref[0] == "fact":
            value = self._fact_label(ref[1], positive)
        elif ref[0] == "nchain":
            value = self._neural_label(ref[1], ref[2], positive)
        else:
            raise LabelError(f"unknown variable ref {ref!r}")
        self._cache[key] = value
        return value

    def _fact_label(self, fact_id: int, positive: bool):
        p = self.fact_probability(fact_id)
        if not self.gradient:
            return p if positive else 1.0 - p
        grad = np.zeros(self.slot_map.n_total)
        source = self.gp.facts[fact_id].source
        if isinstance(source, LearnableLabel):
            grad[source.index] = 1.0
        elif isinstance(source, AdChainLabel):
            pk, denom = self._ad_chain(source)
            idx = source.param_indices
            grad[idx[source.position]] = 1.0 / denom
            for j in idx[: source.position]:
                grad[j] = pk / denom
        if positive:
            return (p, grad)
        return (1.0 - p, -grad)

    def _neural_label(self, group_id: int, k: int, positive: bool):
        pk, denom = self._neural_chain(group_id, k)
        if not self.gradient:
            return pk if positive else 1.0 - pk
        grad = np.zeros(self.slot_map.n_total)
        grad[self.slot_map.slot(group_id, k)] = 1.0 / denom
        for j in range(k):
            grad[self.slot_map.slot(group_id, j)] = pk / denom
        if positive:
            return (pk, grad)
        return (1.0 - pk, -grad)
