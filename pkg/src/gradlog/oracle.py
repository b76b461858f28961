"""Brute-force reference implementations.

World enumeration sums the weight of every truth assignment to the
probabilistic facts (and one outcome per AD instance / neural group) in
which the query is derivable; derivability is decided by iterating the
ground rules to a fixpoint, stratum by stratum.  These paths share nothing
with the compilation pipeline, which is the point: they are the oracle the
pipeline is tested against.

Also provides exhaustive bottom-up grounding for function-free programs and
a central finite-difference gradient.
"""

from __future__ import annotations

import itertools
import math

from .errors import BudgetError, UnstratifiedError
from .grounding import (
    DerivedRef,
    FactRef,
    FixedLabel,
    GroundAD,
    GroundLiteral,
    GroundProgram,
    GroundRule,
    LearnableLabel,
    NeuralRef,
)
from .parser import Fixed, Learnable, Program
from .terms import (
    Atom,
    Compound,
    Constant,
    Term,
    apply_substitution,
    is_ground,
    variables_of,
)

MAX_WORLD_BITS = 25


def _fact_probability(gp: GroundProgram, fact_id: int, params=None) -> float:
    source = gp.facts[fact_id].source
    if isinstance(source, FixedLabel):
        return source.p
    if isinstance(source, LearnableLabel):
        if params is None:
            raise ValueError("learnable fact needs a parameter vector")
        return float(params[source.index])
    # AD chain fact: recompute from the group parameters
    used = sum(float(params[i]) for i in source.param_indices[: source.position])
    return float(params[source.param_indices[source.position]]) / (1.0 - used)


def _member_probability(spec, params) -> float:
    if isinstance(spec, Fixed):
        return spec.p
    assert isinstance(spec, Learnable)
    return float(params[spec.index])


def _ad_outcomes(ad: GroundAD, params):
    """Member probabilities plus a residual 'no head' outcome when open."""
    probs = [_member_probability(spec, params) for spec, _ in ad.members]
    total = sum(probs)
    outcomes = [(k, p) for k, p in enumerate(probs)]
    if total < 1.0 - 1e-9:
        outcomes.append((None, 1.0 - total))
    return outcomes


class _Closure:
    """Stratified fixpoint evaluation of one world."""

    def __init__(self, gp: GroundProgram):
        self.gp = gp
        self.strata = self._stratify()

    def _stratify(self):
        # longest-path strata over the derived-atom dependency graph;
        # negative edges bump the stratum, cycles are rejected
        memo: dict[Atom, int] = {}
        visiting: set[Atom] = set()

        def stratum(atom: Atom) -> int:
            if atom in memo:
                return memo[atom]
            if atom in visiting:
                raise UnstratifiedError(f"dependency cycle through {atom}")
            visiting.add(atom)
            level = 0
            for rule_id in self.gp.rules_by_atom.get(atom, ()):
                for lit in self.gp.rules[rule_id].body:
                    if isinstance(lit.ref, DerivedRef):
                        dep = stratum(lit.ref.atom)
                        level = max(level, dep + (0 if lit.positive else 1))
            visiting.discard(atom)
            memo[atom] = level
            return level

        heads = list(self.gp.rules_by_atom)
        for ad in self.gp.ads:
            heads.extend(atom for _, atom in ad.members)
        for atom in list(heads):
            stratum(atom)
        out: dict[int, list] = {}
        for rule_id, rule in enumerate(self.gp.rules):
            out.setdefault(memo.get(rule.head, 0), []).append(("rule", rule_id))
        for ad_id, ad in enumerate(self.gp.ads):
            level = max((memo.get(atom, 0) for _, atom in ad.members), default=0)
            out.setdefault(level, []).append(("ad", ad_id))
        return [out[level] for level in sorted(out)]

    def derive(self, fact_state, group_state, ad_state) -> set[Atom]:
        """Least model: true derived atoms under the given choices."""
        true_atoms: set[Atom] = set()

        def literal_holds(lit: GroundLiteral) -> bool:
            ref = lit.ref
            if isinstance(ref, FactRef):
                value = fact_state[ref.fact_id]
            elif isinstance(ref, NeuralRef):
                value = group_state[ref.group_id] == ref.outcome
            else:
                atom = ref.atom
                value = atom in true_atoms or _fact_true(atom)
            return value if lit.positive else not value

        def _fact_true(atom: Atom) -> bool:
            fact_id = self.gp.fact_by_atom.get(atom)
            if fact_id is not None and fact_state[fact_id]:
                return True
            gid_k = self.gp.neural_by_atom.get(atom)
            # neural members referenced as atoms only when not rule-shadowed
            if gid_k is not None and atom not in self.gp.rules_by_atom:
                return group_state[gid_k[0]] == gid_k[1]
            return False

        for stratum in self.strata:
            changed = True
            while changed:
                changed = False
                for kind, index in stratum:
                    if kind == "rule":
                        rule = self.gp.rules[index]
                        if rule.head in true_atoms:
                            continue
                        if all(literal_holds(l) for l in rule.body):
                            true_atoms.add(rule.head)
                            changed = True
                    else:
                        ad = self.gp.ads[index]
                        choice = ad_state[index]
                        if choice is None:
                            continue
                        head = ad.members[choice][1]
                        if head in true_atoms:
                            continue
                        if all(literal_holds(l) for l in ad.body):
                            true_atoms.add(head)
                            changed = True
        return true_atoms

    def query_holds(self, query: Atom, fact_state, group_state, ad_state) -> bool:
        true_atoms = self.derive(fact_state, group_state, ad_state)
        if query in true_atoms:
            return True
        fact_id = self.gp.fact_by_atom.get(query)
        if fact_id is not None and fact_state[fact_id]:
            return True
        gid_k = self.gp.neural_by_atom.get(query)
        if gid_k is not None and query not in self.gp.rules_by_atom:
            return group_state[gid_k[0]] == gid_k[1]
        return False


def world_weight(true_probs, false_probs) -> float:
    """Product of true-fact and false-fact probabilities.

    Accumulated as two partial products multiplied once at the end, which
    keeps simple textbook weights exactly representable.
    """
    t = 1.0
    for p in true_probs:
        t *= p
    f = 1.0
    for p in false_probs:
        f *= p
    return t * f


def enumerate_probability(gp: GroundProgram, query: Atom, params=None) -> float:
    """Success probability by summing all possible worlds."""
    bits = len(gp.facts)
    for group in gp.groups:
        bits += math.ceil(math.log2(max(len(group.domain), 2)))
    for ad in gp.ads:
        bits += math.ceil(math.log2(max(len(ad.members) + 1, 2)))
    if bits > MAX_WORLD_BITS:
        raise BudgetError(f"too many facts to enumerate ({bits} bits of state)")

    fact_probs = [_fact_probability(gp, f.fact_id, params) for f in gp.facts]
    ad_outcome_lists = [_ad_outcomes(ad, params) for ad in gp.ads]
    closure = _Closure(gp)

    total = 0.0
    fact_ids = range(len(gp.facts))
    for fact_state in itertools.product((False, True), repeat=len(gp.facts)):
        true_probs = [fact_probs[i] for i in fact_ids if fact_state[i]]
        false_probs = [1.0 - fact_probs[i] for i in fact_ids if not fact_state[i]]
        base = world_weight(true_probs, false_probs)
        if base == 0.0:
            continue
        for group_state in itertools.product(
            *[range(len(g.domain)) for g in gp.groups]
        ):
            gw = base
            for g, outcome in zip(gp.groups, group_state):
                gw *= g.distribution[outcome]
            if gw == 0.0:
                continue
            for ad_choices in itertools.product(*ad_outcome_lists) if ad_outcome_lists else [()]:
                weight = gw
                for _, p in ad_choices:
                    weight *= p
                if weight == 0.0:
                    continue
                ad_state = [choice for choice, _ in ad_choices]
                if closure.query_holds(query, fact_state, group_state, ad_state):
                    total += weight
    return total


def finite_difference_gradient(fn, params, h: float = 1e-6):
    """Central differences of a scalar function of a parameter vector."""
    import numpy as np

    params = np.asarray(params, dtype=np.float64)
    grad = np.zeros_like(params)
    for i in range(len(params)):
        up = params.copy()
        up[i] += h
        down = params.copy()
        down[i] -= h
        grad[i] = (fn(up) - fn(down)) / (2.0 * h)
    return grad


# --- exhaustive bottom-up grounding ------------------------------------------------


def exhaustive_ground(program: Program, query: Atom | None = None) -> GroundProgram:
    """Instantiate every clause over the program's constants.

    Only valid for function-free, builtin-free programs (finite Herbrand
    base); used as the grounding oracle in tests.
    """
    from .grounding import _source_of

    constants = _program_constants(program, query)
    gp = GroundProgram()
    for fact in program.facts:
        gp.add_fact(fact.atom, _source_of(fact.spec))
    for rule in program.rules:
        for theta in _all_substitutions(variables_of(rule), constants):
            ground_rule = apply_substitution(rule, theta)
            if not is_ground(ground_rule):
                continue
            gp.add_rule(
                GroundRule(
                    ground_rule.head,
                    tuple(
                        GroundLiteral(lit.positive, DerivedRef(lit.atom))
                        for lit in ground_rule.body
                    ),
                )
            )
    for ad_id, ad in enumerate(program.ads):
        ad_vars = set()
        for _, atom in ad.heads:
            ad_vars |= variables_of(atom)
        for lit in ad.body:
            ad_vars |= variables_of(lit)
        for theta in _all_substitutions(ad_vars, constants):
            members = tuple(
                (spec, apply_substitution(atom, theta)) for spec, atom in ad.heads
            )
            if not all(is_ground(a) for _, a in members):
                continue
            body = tuple(
                GroundLiteral(
                    lit.positive, DerivedRef(apply_substitution(lit.atom, theta))
                )
                for lit in ad.body
            )
            gp.ads.append(GroundAD(len(gp.ads), members, body))
    return gp


def _program_constants(program: Program, query: Atom | None = None) -> list[Term]:
    seen: dict = {}

    def visit_term(term: Term):
        if isinstance(term, Constant):
            seen.setdefault(term, None)
        elif isinstance(term, Compound):
            for a in term.args:
                visit_term(a)

    def visit_atom(atom: Atom):
        for a in atom.args:
            visit_term(a)

    for fact in program.facts:
        visit_atom(fact.atom)
    for ad in program.ads:
        for _, atom in ad.heads:
            visit_atom(atom)
        for lit in ad.body:
            visit_atom(lit.atom)
    for rule in program.rules:
        visit_atom(rule.head)
        for lit in rule.body:
            visit_atom(lit.atom)
    for directive in program.queries:
        visit_atom(directive)
    if query is not None:
        visit_atom(query)
    return list(seen) or [Constant("a")]


def _all_substitutions(variables, constants):
    variables = sorted(variables, key=lambda v: v.name)
    if not variables:
        yield {}
        return
    for values in itertools.product(constants, repeat=len(variables)):
        yield dict(zip(variables, values))
