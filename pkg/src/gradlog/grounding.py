"""Query-directed grounding.

Produces the ground clause instances a query depends on, by SLD resolution
with memoized subgoals.  Arithmetic builtins are evaluated away, neural
annotated disjunctions trigger (memoized) forward passes, and annotated
disjunctions are recorded as grouped instances for the AD rewrite.

Two structural guarantees are enforced while grounding:

* no positive cycles: a subgoal that recursively re-enters itself is
  rejected (the propositional rewrite downstream relies on acyclicity);
* stratified negation: a recursive re-entry that passes through an open
  negation is reported as unstratified.

Predicates defined by both a neural AD and rules (the coin-style idiom
``p :- p, guard``) are resolved with the rules shadowing the neural facts
for outside callers, while body literals inside those same rules resolve
against the neural facts; this keeps the ground program acyclic and the
neural output gated by the guard.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .errors import (
    CyclicProgramError,
    DepthLimitError,
    InstantiationError,
    BudgetError,
    UnstratifiedError,
    ZeroDivisorError,
)
from .parser import AnnotatedDisjunction, Fixed, Learnable, NeuralAD, ProbSpec, Program
from .terms import (
    Atom,
    Compound,
    Constant,
    Term,
    Variable,
    apply_substitution,
    format_atom,
    is_ground,
    rename_apart,
    substitute,
    unify_terms,
    variables_of,
)


DEFAULT_DEPTH_LIMIT = 10_000


def _unify_open(a: Atom, b: Atom, theta=None):
    """Atom unification returning an unresolved (chain) binding map."""
    if a.predicate != b.predicate or len(a.args) != len(b.args):
        return None
    theta = dict(theta) if theta else {}
    for x, y in zip(a.args, b.args):
        theta = unify_terms(x, y, theta)
        if theta is None:
            return None
    return theta


# --- label sources -----------------------------------------------------------


@dataclass(frozen=True)
class FixedLabel:
    p: float


@dataclass(frozen=True)
class LearnableLabel:
    index: int


@dataclass(frozen=True)
class AdChainLabel:
    """Chain variable of a learnable AD.

    Probability is ``p[k]/(1 - sum(p[:k]))`` over the group's parameter
    indices, so its gradient spreads over every earlier group member.
    """

    param_indices: tuple[int, ...]
    position: int


LabelSource = FixedLabel | LearnableLabel | AdChainLabel


# --- ground program -----------------------------------------------------------


@dataclass(frozen=True)
class GroundFact:
    fact_id: int
    atom: Atom
    source: LabelSource


@dataclass(frozen=True)
class NeuralGroup:
    """One ground neural AD: n mutually exclusive outcomes, one forward pass."""

    group_id: int
    model_id: str
    inputs: tuple[Term, ...]
    domain: tuple[Term, ...]
    atoms: tuple[Atom, ...]
    distribution: tuple[float, ...]


@dataclass(frozen=True)
class FactRef:
    fact_id: int


@dataclass(frozen=True)
class NeuralRef:
    group_id: int
    outcome: int


@dataclass(frozen=True)
class DerivedRef:
    atom: Atom


BodyRef = FactRef | NeuralRef | DerivedRef


@dataclass(frozen=True)
class GroundLiteral:
    positive: bool
    ref: BodyRef


@dataclass(frozen=True)
class GroundRule:
    head: Atom
    body: tuple[GroundLiteral, ...]


@dataclass(frozen=True)
class GroundAD:
    """A ground annotated-disjunction instance, pre chain-rewrite."""

    ad_id: int
    members: tuple[tuple[ProbSpec, Atom], ...]
    body: tuple[GroundLiteral, ...]


@dataclass
class GroundProgram:
    query: Atom | None = None
    facts: list[GroundFact] = field(default_factory=list)
    groups: list[NeuralGroup] = field(default_factory=list)
    rules: list[GroundRule] = field(default_factory=list)
    ads: list[GroundAD] = field(default_factory=list)
    answers: list[Atom] = field(default_factory=list)
    # atom -> definition indexes, used by the propositional rewrite
    fact_by_atom: dict[Atom, int] = field(default_factory=dict)
    neural_by_atom: dict[Atom, tuple[int, int]] = field(default_factory=dict)
    rules_by_atom: dict[Atom, list[int]] = field(default_factory=dict)
    # emission order of ("fact"|"rule"|"group", index), for printing
    events: list[tuple[str, int]] = field(default_factory=list)

    def add_fact(self, atom: Atom, source: LabelSource) -> int:
        fact_id = len(self.facts)
        self.facts.append(GroundFact(fact_id, atom, source))
        self.fact_by_atom[atom] = fact_id
        self.events.append(("fact", fact_id))
        return fact_id

    def add_rule(self, rule: GroundRule) -> int:
        rule_id = len(self.rules)
        self.rules.append(rule)
        self.rules_by_atom.setdefault(rule.head, []).append(rule_id)
        self.events.append(("rule", rule_id))
        return rule_id

    def add_group(self, group: NeuralGroup) -> NeuralGroup:
        self.groups.append(group)
        for k, atom in enumerate(group.atoms):
            self.neural_by_atom.setdefault(atom, (group.group_id, k))
        self.events.append(("group", group.group_id))
        return group

    def add_ad(self, ad: "GroundAD") -> "GroundAD":
        self.ads.append(ad)
        self.events.append(("ad", ad.ad_id))
        return ad


# --- arithmetic builtins -------------------------------------------------------

BUILTIN_KEYS = {
    ("is", 2),
    ("=:=", 2),
    ("=\\=", 2),
    (">", 2),
    ("<", 2),
    (">=", 2),
    ("=<", 2),
}

_ARITH = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
}


def eval_arith(term: Term) -> int:
    """Integer evaluation of +, -, *, //, mod expressions."""
    if isinstance(term, Constant):
        if isinstance(term.value, int):
            return term.value
        raise InstantiationError(f"non-numeric constant in arithmetic: {term.value}")
    if isinstance(term, Variable):
        raise InstantiationError(f"unbound variable {term.name} in arithmetic")
    if isinstance(term, Compound) and len(term.args) == 2:
        if term.functor in _ARITH:
            return _ARITH[term.functor](eval_arith(term.args[0]), eval_arith(term.args[1]))
        if term.functor in ("//", "mod"):
            lhs, rhs = eval_arith(term.args[0]), eval_arith(term.args[1])
            if rhs == 0:
                raise ZeroDivisorError(f"zero divisor in {format_atom(Atom(term.functor, term.args))}")
            return lhs // rhs if term.functor == "//" else lhs % rhs
    raise InstantiationError(f"cannot evaluate arithmetic term {term}")


def eval_builtin(atom: Atom):
    """Evaluate a comparison or ``is`` goal.

    Returns True/False for tests, or a binding map when ``is`` instantiates
    its left side.  Raises InstantiationError when arguments are insufficiently
    instantiated.
    """
    op = atom.predicate
    lhs, rhs = atom.args
    if op == "is":
        value = eval_arith(rhs)
        if isinstance(lhs, Variable):
            return {lhs: Constant(value)}
        if isinstance(lhs, Constant) and isinstance(lhs.value, int):
            return lhs.value == value
        return False
    a, b = eval_arith(lhs), eval_arith(rhs)
    if op == "=:=":
        return a == b
    if op == "=\\=":
        return a != b
    if op == ">":
        return a > b
    if op == "<":
        return a < b
    if op == ">=":
        return a >= b
    if op == "=<":
        return a <= b
    raise InstantiationError(f"unknown builtin {op}/2")


# --- the grounder ----------------------------------------------------------------


def _variant_key(atom: Atom):
    """Canonical form of a call modulo variable renaming."""
    mapping: dict[Variable, int] = {}

    def canon(term: Term):
        if isinstance(term, Variable):
            if term not in mapping:
                mapping[term] = len(mapping)
            return ("v", mapping[term])
        if isinstance(term, Constant):
            return ("c", term.value)
        assert isinstance(term, Compound)
        return ("f", term.functor, tuple(canon(a) for a in term.args))

    return (atom.predicate, tuple(canon(a) for a in atom.args))


class Grounder:
    def __init__(
        self,
        program: Program,
        runtime=None,
        depth_limit: int = DEFAULT_DEPTH_LIMIT,
        max_rules: int | None = None,
        max_work: int | None = None,
    ):
        self.program = program
        self.runtime = runtime
        self.depth_limit = depth_limit
        self.max_rules = max_rules
        self.max_work = max_work
        self._work = 0
        self.gp = GroundProgram()
        self._fresh = itertools.count()
        self._answers: dict = {}
        self._stack: list[tuple] = []
        self._stack_set: dict = {}
        self._open_negations = 0
        self._fact_ids: dict[Atom, int] = {}
        self._ad_instances: dict = {}
        self._nad_instances: dict = {}
        self._group_nad: list[int] = []
        self._rule_seen: set[GroundRule] = set()

        self.fact_defs: dict[tuple[str, int], list] = {}
        for fact in program.facts:
            if not is_ground(fact.atom):
                raise InstantiationError(f"probabilistic fact {fact.atom} is not ground")
            self.fact_defs.setdefault(fact.atom.key, []).append(fact)
        self.ad_defs: dict[tuple[str, int], list] = {}
        for ad_idx, ad in enumerate(program.ads):
            for head_idx, (_, atom) in enumerate(ad.heads):
                self.ad_defs.setdefault(atom.key, []).append((ad_idx, head_idx))
        self.nad_defs: dict[tuple[str, int], list] = {}
        for nad_idx, nad in enumerate(program.nads):
            for head_idx, atom in enumerate(nad.heads):
                self.nad_defs.setdefault(atom.key, []).append((nad_idx, head_idx))
        self.rule_defs: dict[tuple[str, int], list] = {}
        for rule in program.rules:
            self.rule_defs.setdefault(rule.head.key, []).append(rule)
        # predicates where rules gate a neural AD (coin-style shadowing)
        self.shadowed_keys = {
            key for key in self.nad_defs if key in self.rule_defs
        }

    # -- public entry ---------------------------------------------------

    def ground(self, query: Atom) -> GroundProgram:
        answers = self._solve(query, depth=0, caller_key=None)
        self.gp.query = query
        self.gp.answers = list(answers)
        return self.gp

    # -- resolution -----------------------------------------------------

    def _solve(self, goal: Atom, depth: int, caller_key) -> list[Atom]:
        """All derivable ground instances of ``goal``; emits their clauses."""
        if goal.key in BUILTIN_KEYS:
            raise InstantiationError(f"builtin {goal.predicate}/2 cannot be a query goal")
        if depth > self.depth_limit:
            raise DepthLimitError(
                f"recursion exceeded {self.depth_limit} at {format_atom(goal)}"
            )
        shadow_self = goal.key in self.shadowed_keys and caller_key == goal.key
        variant = (_variant_key(goal), shadow_self)
        if variant in self._stack_set:
            if self._open_negations > self._stack_set[variant]:
                raise UnstratifiedError(
                    f"negation cycles through {format_atom(goal)}"
                )
            raise CyclicProgramError(
                f"positive recursion through {format_atom(goal)}"
            )
        if variant in self._answers:
            return self._answers[variant]

        self._stack.append(variant)
        self._stack_set[variant] = self._open_negations
        try:
            answers: list[Atom] = []
            seen: set[Atom] = set()

            def add_answer(atom: Atom):
                if atom not in seen:
                    seen.add(atom)
                    answers.append(atom)

            key = goal.key
            use_rules = key in self.rule_defs and not shadow_self
            use_facts = not (key in self.shadowed_keys and not shadow_self)

            if use_facts:
                for fact in self.fact_defs.get(key, ()):
                    if _unify_open(goal, fact.atom) is not None:
                        self._emit_fact(fact.atom, _source_of(fact.spec))
                        add_answer(fact.atom)
                for ad_idx, head_idx in self.ad_defs.get(key, ()):
                    for atom in self._solve_ad(goal, ad_idx, head_idx, depth):
                        add_answer(atom)
                for nad_idx, head_idx in self.nad_defs.get(key, ()):
                    for atom in self._solve_nad(goal, nad_idx, head_idx, depth):
                        add_answer(atom)
            if use_rules:
                pending_rules: list[GroundRule] = []
                for rule in self.rule_defs.get(key, ()):
                    fresh = rename_apart(rule, self._fresh)
                    theta = _unify_open(goal, fresh.head)
                    if theta is None:
                        continue
                    for sol_theta, lits in self._solve_body(
                        fresh.body, theta, key, depth + 1
                    ):
                        head = substitute(fresh.head, sol_theta)
                        if not is_ground(head):
                            raise InstantiationError(
                                f"rule for {format_atom(rule.head)} derived the "
                                f"non-ground answer {format_atom(head)}"
                            )
                        ground_rule = GroundRule(head, tuple(lits))
                        if ground_rule not in self._rule_seen:
                            self._rule_seen.add(ground_rule)
                            pending_rules.append(ground_rule)
                        add_answer(head)
                for ground_rule in pending_rules:
                    self._emit_rule(ground_rule)
            self._answers[variant] = answers
            return answers
        finally:
            self._stack.pop()
            del self._stack_set[variant]

    def _solve_body(self, body, theta, head_key, depth):
        """Yield (bindings, ground literals) for every solution of a body."""
        solutions = [(theta, [])]
        for literal in body:
            next_solutions = []
            self._work += len(solutions)
            if self.max_work is not None and self._work > self.max_work:
                raise BudgetError(f"grounding work budget {self.max_work} exceeded")
            for sol_theta, lits in solutions:
                atom = substitute(literal.atom, sol_theta)
                if atom.key in BUILTIN_KEYS:
                    if not literal.positive:
                        result = self._eval_ground_builtin(atom)
                        if result is False:
                            next_solutions.append((sol_theta, lits))
                        continue
                    result = eval_builtin(atom)
                    if result is True:
                        next_solutions.append((sol_theta, lits))
                    elif result is False:
                        continue
                    else:
                        merged = dict(sol_theta)
                        merged.update(result)
                        next_solutions.append((merged, lits))
                    continue
                if literal.positive:
                    answers = self._solve(atom, depth + 1, head_key)
                    self._work += len(answers)
                    if self.max_work is not None and self._work > self.max_work:
                        raise BudgetError(
                            f"grounding work budget {self.max_work} exceeded"
                        )
                    for answer in answers:
                        bound = _unify_open(atom, answer, sol_theta)
                        if bound is None:
                            continue
                        ref = self._ref_for(answer, head_key)
                        next_solutions.append(
                            (bound, lits + [GroundLiteral(True, ref)])
                        )
                else:
                    if not is_ground(atom):
                        raise InstantiationError(
                            f"negated goal \\+{format_atom(atom)} is not ground"
                        )
                    self._open_negations += 1
                    try:
                        sub_answers = self._solve(atom, depth + 1, head_key)
                    finally:
                        self._open_negations -= 1
                    if not sub_answers:
                        # underivable atom: the negation holds vacuously
                        next_solutions.append((sol_theta, lits))
                    else:
                        ref = self._ref_for(atom, head_key)
                        next_solutions.append(
                            (sol_theta, lits + [GroundLiteral(False, ref)])
                        )
            solutions = next_solutions
            if not solutions:
                break
        return solutions

    def _eval_ground_builtin(self, atom: Atom) -> bool:
        result = eval_builtin(atom)
        if isinstance(result, dict):
            raise InstantiationError(
                f"negated builtin \\+{format_atom(atom)} left a variable unbound"
            )
        return result

    def _ref_for(self, atom: Atom, caller_key) -> BodyRef:
        key = atom.key
        if key in self.shadowed_keys:
            if caller_key == key:
                gid_k = self.gp.neural_by_atom.get(atom)
                if gid_k is not None:
                    return NeuralRef(*gid_k)
            return DerivedRef(atom)
        if key in self.rule_defs or key in self.ad_defs:
            return DerivedRef(atom)
        gid_k = self.gp.neural_by_atom.get(atom)
        if gid_k is not None:
            nad_idx = self._group_nad[gid_k[0]]
            if not self.program.nads[nad_idx].body:
                return NeuralRef(*gid_k)
            return DerivedRef(atom)
        fact_id = self._fact_ids.get(atom)
        if fact_id is not None:
            return FactRef(fact_id)
        return DerivedRef(atom)

    # -- facts, ADs, neural ADs -------------------------------------------

    def _emit_fact(self, atom: Atom, source: LabelSource) -> int:
        fact_id = self._fact_ids.get(atom)
        if fact_id is None:
            fact_id = self.gp.add_fact(atom, source)
            self._fact_ids[atom] = fact_id
        return fact_id

    def _emit_rule(self, rule: GroundRule):
        if self.max_rules is not None and len(self.gp.rules) >= self.max_rules:
            raise BudgetError(f"ground rule budget {self.max_rules} exceeded")
        self.gp.add_rule(rule)

    def _solve_ad(self, goal: Atom, ad_idx: int, head_idx: int, depth: int):
        ad = self.program.ads[ad_idx]
        fresh_vars = {
            v: Variable(f"_R{next(self._fresh)}")
            for v in _ad_variables(ad)
        }
        heads = [
            (spec, apply_substitution(atom, fresh_vars)) for spec, atom in ad.heads
        ]
        body = tuple(apply_substitution(lit, fresh_vars) for lit in ad.body)
        theta = _unify_open(goal, heads[head_idx][1])
        if theta is None:
            return
        for sol_theta, lits in self._solve_body(body, theta, goal.key, depth + 1):
            members = []
            for spec, atom in heads:
                ground_atom = substitute(atom, sol_theta)
                if not is_ground(ground_atom):
                    raise InstantiationError(
                        f"annotated disjunction head {format_atom(ground_atom)} "
                        "is not ground after body resolution"
                    )
                members.append((spec, ground_atom))
            instance_key = (ad_idx, tuple(a for _, a in members), tuple(lits))
            if instance_key not in self._ad_instances:
                self._ad_instances[instance_key] = len(self.gp.ads)
                self.gp.add_ad(GroundAD(len(self.gp.ads), tuple(members), tuple(lits)))
            yield members[head_idx][1]

    def _solve_nad(self, goal: Atom, nad_idx: int, head_idx: int, depth: int):
        nad = self.program.nads[nad_idx]
        fresh_vars = {
            v: Variable(f"_R{next(self._fresh)}") for v in _nad_variables(nad)
        }
        heads = [apply_substitution(a, fresh_vars) for a in nad.heads]
        inputs = tuple(apply_substitution(t, fresh_vars) for t in nad.inputs)
        body = tuple(apply_substitution(lit, fresh_vars) for lit in nad.body)
        theta = _unify_open(goal, heads[head_idx])
        if theta is None:
            return
        for sol_theta, lits in self._solve_body(body, theta, goal.key, depth + 1):
            ground_inputs = tuple(substitute(t, sol_theta) for t in inputs)
            if not all(is_ground(t) for t in ground_inputs):
                raise InstantiationError(
                    f"neural predicate {nad.model_id} called with non-ground "
                    f"inputs ({','.join(map(str, ground_inputs))})"
                )
            ground_heads = tuple(substitute(a, sol_theta) for a in heads)
            if not all(is_ground(a) for a in ground_heads):
                raise InstantiationError(
                    f"neural AD heads for {nad.model_id} are not ground"
                )
            instance_key = (nad_idx, ground_heads, tuple(lits))
            group_id = self._nad_instances.get(instance_key)
            if group_id is None:
                if self.runtime is None:
                    raise InstantiationError(
                        f"program uses neural predicate {nad.model_id} but no "
                        "neural runtime was supplied"
                    )
                dist = tuple(self.runtime.forward(nad.model_id, ground_inputs))
                group_id = len(self.gp.groups)
                group = NeuralGroup(
                    group_id,
                    nad.model_id,
                    ground_inputs,
                    nad.domain,
                    ground_heads,
                    dist,
                )
                self.gp.add_group(group)
                self._group_nad.append(nad_idx)
                self._nad_instances[instance_key] = group_id
                if nad.body:
                    for k, head in enumerate(ground_heads):
                        rule = GroundRule(
                            head, tuple(lits) + (GroundLiteral(True, NeuralRef(group_id, k)),)
                        )
                        if rule not in self._rule_seen:
                            self._rule_seen.add(rule)
                            self._emit_rule(rule)
            yield ground_heads[head_idx]


def _source_of(spec: ProbSpec) -> LabelSource:
    if isinstance(spec, Fixed):
        return FixedLabel(spec.p)
    assert isinstance(spec, Learnable)
    return LearnableLabel(spec.index)


def _ad_variables(ad: AnnotatedDisjunction):
    out = set()
    for _, atom in ad.heads:
        out |= variables_of(atom)
    for lit in ad.body:
        out |= variables_of(lit)
    return out


def _nad_variables(nad: NeuralAD):
    out = set()
    for atom in nad.heads:
        out |= variables_of(atom)
    for t in nad.inputs:
        out |= variables_of(t)
    for lit in nad.body:
        out |= variables_of(lit)
    return out


def ground(
    program: Program,
    query: Atom,
    runtime=None,
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
    max_rules: int | None = None,
    max_work: int | None = None,
    allow_nonground_query: bool = False,
) -> GroundProgram:
    """Ground ``program`` with respect to ``query``."""
    if not allow_nonground_query and not is_ground(query):
        raise InstantiationError(f"query {format_atom(query)} is not ground")
    grounder = Grounder(
        program, runtime, depth_limit=depth_limit, max_rules=max_rules, max_work=max_work
    )
    return grounder.ground(query)


# --- argmax decoding -----------------------------------------------------------


def decode_query(
    program: Program,
    query: Atom,
    runtime,
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
) -> Atom | None:
    """First answer of ``query`` when every probabilistic choice takes its
    most likely outcome.

    Used to evaluate sequence tasks whose exact answer set is too large to
    enumerate; with confident models this is the most probable output.
    """
    solver = _DecodeSolver(program, runtime, depth_limit)
    answers = solver.solve(query, None, 0)
    return answers[0] if answers else None


class _DecodeSolver:
    """Exhaustive solving with every probabilistic choice pinned to its
    argmax outcome; answer lists are memoized per goal variant like the
    grounder's, so repeated subgoals cost nothing."""

    def __init__(self, program: Program, runtime, depth_limit: int):
        self.grounder = Grounder(program, runtime)  # reuse definition indexes
        self.program = program
        self.runtime = runtime
        self.depth_limit = depth_limit
        self._fresh = itertools.count()
        self._answers: dict = {}
        self._stack_set: set = set()

    def solve(self, goal: Atom, caller_key, depth: int) -> list[Atom]:
        if depth > self.depth_limit:
            raise DepthLimitError(f"decode recursion exceeded {self.depth_limit}")
        g = self.grounder
        key = goal.key
        shadow_self = key in g.shadowed_keys and caller_key == key
        variant = (_variant_key(goal), shadow_self)
        if variant in self._answers:
            return self._answers[variant]
        if variant in self._stack_set:
            raise CyclicProgramError(f"decode recursion through {format_atom(goal)}")
        self._stack_set.add(variant)
        try:
            answers: list[Atom] = []
            seen: set[Atom] = set()

            def add(atom: Atom):
                if atom.grnd and atom not in seen:
                    seen.add(atom)
                    answers.append(atom)

            use_rules = key in g.rule_defs and not shadow_self
            use_facts = not (key in g.shadowed_keys and not shadow_self)
            if use_facts:
                for fact in g.fact_defs.get(key, ()):
                    if self._fact_probability(fact.spec) < 0.5:
                        continue
                    if _unify_open(goal, fact.atom) is not None:
                        add(fact.atom)
                for ad_idx, head_idx in g.ad_defs.get(key, ()):
                    self._solve_choice(goal, "ad", ad_idx, head_idx, depth, add)
                for nad_idx, head_idx in g.nad_defs.get(key, ()):
                    self._solve_choice(goal, "nad", nad_idx, head_idx, depth, add)
            if use_rules:
                for rule in g.rule_defs.get(key, ()):
                    fresh = rename_apart(rule, self._fresh)
                    theta = _unify_open(goal, fresh.head)
                    if theta is None:
                        continue
                    for sol in self._solve_body(fresh.body, theta, key, depth):
                        add(substitute(fresh.head, sol))
            self._answers[variant] = answers
            return answers
        finally:
            self._stack_set.discard(variant)

    def _solve_body(self, body, theta, head_key, depth):
        solutions = [theta]
        for literal in body:
            next_solutions = []
            for sol in solutions:
                atom = substitute(literal.atom, sol)
                if atom.key in BUILTIN_KEYS:
                    result = eval_builtin(atom)
                    if literal.positive:
                        if result is True:
                            next_solutions.append(sol)
                        elif isinstance(result, dict):
                            merged = dict(sol)
                            merged.update(result)
                            next_solutions.append(merged)
                    elif result is False:
                        next_solutions.append(sol)
                    continue
                if literal.positive:
                    for answer in self.solve(atom, head_key, depth + 1):
                        bound = _unify_open(atom, answer, sol)
                        if bound is not None:
                            next_solutions.append(bound)
                else:
                    if not atom.grnd:
                        raise InstantiationError(
                            f"negated decode goal {format_atom(atom)} is not ground"
                        )
                    if not self.solve(atom, head_key, depth + 1):
                        next_solutions.append(sol)
            solutions = next_solutions
            if not solutions:
                break
        return solutions

    def _fact_probability(self, spec: ProbSpec) -> float:
        if isinstance(spec, Fixed):
            return spec.p
        if self.runtime is not None and getattr(self.runtime, "store", None) is not None:
            return float(self.runtime.store.params[spec.index])
        return spec.init

    def _solve_choice(self, goal, kind, idx, head_idx, depth, add):
        if kind == "ad":
            ad = self.program.ads[idx]
            probs = [self._fact_probability(spec) for spec, _ in ad.heads]
            if head_idx != max(range(len(probs)), key=probs.__getitem__):
                return
            fresh_vars = {
                v: Variable(f"_R{next(self._fresh)}") for v in _ad_variables(ad)
            }
            head = apply_substitution(ad.heads[head_idx][1], fresh_vars)
            body = tuple(apply_substitution(lit, fresh_vars) for lit in ad.body)
            theta = _unify_open(goal, head)
            if theta is None:
                return
            for sol in self._solve_body(body, theta, goal.key, depth):
                add(substitute(head, sol))
            return
        nad = self.program.nads[idx]
        fresh_vars = {v: Variable(f"_R{next(self._fresh)}") for v in _nad_variables(nad)}
        head = apply_substitution(nad.heads[head_idx], fresh_vars)
        inputs = tuple(apply_substitution(t, fresh_vars) for t in nad.inputs)
        body = tuple(apply_substitution(lit, fresh_vars) for lit in nad.body)
        theta = _unify_open(goal, head)
        if theta is None:
            return
        for sol in self._solve_body(body, theta, goal.key, depth):
            ground_inputs = tuple(substitute(t, sol) for t in inputs)
            if not all(t.grnd for t in ground_inputs):
                raise InstantiationError(
                    f"neural predicate {nad.model_id} called with non-ground inputs"
                )
            dist = self.runtime.forward(nad.model_id, ground_inputs)
            best = max(range(len(dist)), key=dist.__getitem__)
            if best != head_idx:
                continue
            add(substitute(head, sol))


# --- printing --------------------------------------------------------------------


def ground_program_to_text(gp: GroundProgram, params=None) -> str:
    """Render a ground program as probability-annotated facts plus rules."""
    lines: list[str] = []
    for kind, index in gp.events:
        if kind == "fact":
            fact = gp.facts[index]
            lines.append(f"{_label_text(fact.source, params)}::{format_atom(fact.atom)}.")
        elif kind == "group":
            group = gp.groups[index]
            for k, atom in enumerate(group.atoms):
                lines.append(f"{group.distribution[k]!r}::{format_atom(atom)}.")
        elif kind == "ad":
            ad = gp.ads[index]
            heads = ";".join(
                f"{_member_text(spec, params)}::{format_atom(atom)}"
                for spec, atom in ad.members
            )
            body = ""
            if ad.body:
                body = " :- " + ", ".join(
                    (format_atom(_ref_atom(gp, l.ref)) if l.positive else "\\+" + format_atom(_ref_atom(gp, l.ref)))
                    for l in ad.body
                )
            lines.append(heads + body + ".")
        else:
            rule = gp.rules[index]
            lines.append(_rule_text(gp, rule))
    return "\n".join(lines) + ("\n" if lines else "")


def _member_text(spec, params) -> str:
    from .parser import Fixed

    if isinstance(spec, Fixed):
        return repr(spec.p)
    if params is not None:
        return f"t({float(params[spec.index])!r})"
    return f"t[{spec.index}]"


def _label_text(source: LabelSource, params) -> str:
    if isinstance(source, FixedLabel):
        return repr(source.p)
    if isinstance(source, LearnableLabel):
        value = params[source.index] if params is not None else None
        return f"t({value!r})" if value is not None else f"t[{source.index}]"
    total = None
    if params is not None:
        used = sum(params[i] for i in source.param_indices[: source.position])
        value = params[source.param_indices[source.position]] / (1.0 - used)
        return repr(float(value))
    return f"chain[{source.param_indices}@{source.position}]"


def _rule_text(gp: GroundProgram, rule: GroundRule) -> str:
    if not rule.body:
        return f"{format_atom(rule.head)}."
    parts = []
    for lit in rule.body:
        text = format_atom(_ref_atom(gp, lit.ref))
        parts.append(text if lit.positive else f"\\+{text}")
    return f"{format_atom(rule.head)} :- {', '.join(parts)}."


def _ref_atom(gp: GroundProgram, ref: BodyRef) -> Atom:
    if isinstance(ref, FactRef):
        return gp.facts[ref.fact_id].atom
    if isinstance(ref, NeuralRef):
        return gp.groups[ref.group_id].atoms[ref.outcome]
    return ref.atom
