"""End-to-end inference: ground, rewrite, unfold, compile, evaluate.

This is the path every caller uses (CLI, training loop, tests); the oracle
module provides the independent reference it is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import circuit as circuit_mod
from .grounding import GroundProgram, ground
from .parser import Program
from .semiring import Labeling, ParameterStore
from .terms import Atom, format_atom
from .transform import build_formula, rewrite_ads


@dataclass
class QueryResult:
    query: Atom
    probability: float
    gradient: np.ndarray | None
    gp: GroundProgram
    circuit: circuit_mod.Circuit
    labeling: Labeling

    @property
    def slot_map(self):
        return self.labeling.slot_map


def prepare(
    program: Program,
    query: Atom,
    runtime=None,
    depth_limit: int = 10_000,
    max_rules: int | None = None,
    max_work: int | None = None,
    allow_nonground_query: bool = False,
) -> GroundProgram:
    """Ground and AD-rewrite; the result is ready for formula construction."""
    gp = ground(
        program,
        query,
        runtime,
        depth_limit=depth_limit,
        max_rules=max_rules,
        max_work=max_work,
        allow_nonground_query=allow_nonground_query,
    )
    return rewrite_ads(gp)


def evaluate_ground_program(
    gp: GroundProgram,
    query: Atom,
    store: ParameterStore,
    gradient: bool = False,
    order=None,
    node_budget: int = circuit_mod.DEFAULT_NODE_BUDGET,
) -> QueryResult:
    builder, root = build_formula(gp, query)
    if order is None:
        order = circuit_mod.default_order(builder, root)
    compiled = circuit_mod.compile_formula(builder, root, order, node_budget)
    labeling = Labeling(gp, store, gradient=gradient)
    value = circuit_mod.evaluate(compiled, labeling)
    if gradient:
        probability, grad = value
    else:
        probability, grad = value, None
    return QueryResult(query, probability, grad, gp, compiled, labeling)


def run_query(
    program: Program,
    query: Atom,
    runtime=None,
    store: ParameterStore | None = None,
    gradient: bool = False,
    order=None,
    depth_limit: int = 10_000,
    node_budget: int = circuit_mod.DEFAULT_NODE_BUDGET,
    max_rules: int | None = None,
) -> QueryResult:
    """Success probability (and optionally its gradient) of one ground query."""
    if store is None:
        store = ParameterStore.from_program(program)
    gp = prepare(program, query, runtime, depth_limit=depth_limit, max_rules=max_rules)
    return evaluate_ground_program(
        gp, query, store, gradient=gradient, order=order, node_budget=node_budget
    )


def var_names_for(gp: GroundProgram) -> dict:
    """Human-readable circuit variable names for DOT export."""
    names: dict = {}
    for fact in gp.facts:
        names[("fact", fact.fact_id)] = format_atom(fact.atom)
    for group in gp.groups:
        for k in range(max(len(group.domain) - 1, 0)):
            names[("nchain", group.group_id, k)] = format_atom(group.atoms[k])
    return names
