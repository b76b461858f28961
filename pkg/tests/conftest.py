"""Shared helpers: randomized program generators used by the property suites."""

from __future__ import annotations

import numpy as np
import pytest

from gradlog.grounding import (
    DerivedRef,
    FixedLabel,
    GroundAD,
    GroundLiteral,
    GroundProgram,
    GroundRule,
)
from gradlog.parser import Fixed
from gradlog.terms import Atom


def random_ground_program(
    rng: np.random.Generator,
    max_facts: int = 10,
    max_rules: int = 12,
    with_negation: bool = True,
    with_ads: bool = False,
) -> GroundProgram:
    """A random acyclic ground program with stratified negation.

    Rule bodies only reference strictly earlier atoms in a global order, so
    the atom dependency graph is a DAG and negation stratifies trivially.
    """
    gp = GroundProgram()
    n_facts = int(rng.integers(1, max_facts + 1))
    fact_atoms = [Atom(f"f{i}") for i in range(n_facts)]
    for atom in fact_atoms:
        gp.add_fact(atom, FixedLabel(round(float(rng.uniform(0.05, 0.95)), 3)))

    available = list(fact_atoms)
    if with_ads:
        n_ads = int(rng.integers(1, 3))
        for a in range(n_ads):
            n_heads = int(rng.integers(2, 4))
            heads = [Atom(f"adh{a}_{k}") for k in range(n_heads)]
            probs = rng.uniform(0.05, 1.0, size=n_heads)
            # sometimes leave residual mass (open AD)
            total = float(probs.sum())
            scale = 1.0 / total if rng.random() < 0.5 else 0.8 / total
            members = tuple(
                (Fixed(float(p * scale)), atom) for p, atom in zip(probs, heads)
            )
            body = tuple(
                GroundLiteral(bool(rng.random() < 0.8), DerivedRef(atom))
                for atom in _sample(rng, available, rng.integers(0, 2))
            )
            gp.add_ad(GroundAD(len(gp.ads), members, body))
            available.extend(heads)

    n_derived = int(rng.integers(1, 7))
    derived = [Atom(f"d{i}") for i in range(n_derived)]
    n_rules = int(rng.integers(1, max_rules + 1))
    for _ in range(n_rules):
        idx = int(rng.integers(0, n_derived))
        head = derived[idx]
        pool = available + derived[:idx]
        if not pool:
            continue
        body = []
        for atom in _sample(rng, pool, rng.integers(1, 4)):
            positive = True if not with_negation else bool(rng.random() < 0.75)
            body.append(GroundLiteral(positive, DerivedRef(atom)))
        gp.add_rule(GroundRule(head, tuple(body)))
    heads_with_rules = [a for a in derived if a in gp.rules_by_atom]
    gp.query = heads_with_rules[-1] if heads_with_rules else fact_atoms[0]
    return gp


def _sample(rng: np.random.Generator, pool: list, count: int) -> list:
    count = min(int(count), len(pool))
    if count == 0:
        return []
    picked = rng.choice(len(pool), size=count, replace=False)
    return [pool[i] for i in sorted(picked)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
