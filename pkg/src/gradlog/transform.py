"""Propositional rewriting of ground programs.

Two stages: annotated disjunctions become chains of independent choice facts
plus deterministic rules (the standard sequential encoding), and the rewritten
ground program is unfolded into a Boolean formula defining the query via its
completion: each derived atom is the disjunction of its rule bodies, each
body the conjunction of its literals, down to probabilistic-fact variables.

Formulas are hash-consed DAGs so shared subgoals appear once; negation is
pushed to the variables while unfolding, so NOT only ever wraps a VAR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import CyclicProgramError, DegenerateAdError
from .grounding import (
    AdChainLabel,
    DerivedRef,
    FactRef,
    FixedLabel,
    GroundLiteral,
    GroundProgram,
    GroundRule,
    NeuralRef,
)
from .parser import Learnable
from .terms import Atom, Constant, format_atom

AD_SUM_TOLERANCE = 1e-9

FALSE = 0
TRUE = 1


@dataclass
class FormulaBuilder:
    """Interned Boolean formula nodes.

    Node ids 0 and 1 are the FALSE/TRUE terminals.  Other nodes are tuples:
    ``("var", ref)``, ``("not", child)``, ``("and", children)`` or
    ``("or", children)``.  Var refs are ``("fact", fact_id)`` or
    ``("group", group_id, outcome)``.
    """

    nodes: list = field(default_factory=lambda: [("false",), ("true",)])
    _intern: dict = field(default_factory=dict)

    def _make(self, node) -> int:
        found = self._intern.get(node)
        if found is None:
            found = len(self.nodes)
            self.nodes.append(node)
            self._intern[node] = found
        return found

    def var(self, ref) -> int:
        return self._make(("var", ref))

    def negate(self, node_id: int) -> int:
        if node_id == TRUE:
            return FALSE
        if node_id == FALSE:
            return TRUE
        kind = self.nodes[node_id][0]
        if kind != "var":
            raise ValueError("negation is only applied to variables after NNF")
        return self._make(("not", node_id))

    def conj(self, children) -> int:
        flat: list[int] = []
        seen = set()
        for child in children:
            if child == FALSE:
                return FALSE
            if child == TRUE:
                continue
            if self.nodes[child][0] == "and":
                grand = self.nodes[child][1]
            else:
                grand = (child,)
            for g in grand:
                if g not in seen:
                    seen.add(g)
                    flat.append(g)
        if not flat:
            return TRUE
        if len(flat) == 1:
            return flat[0]
        return self._make(("and", tuple(flat)))

    def disj(self, children) -> int:
        flat: list[int] = []
        seen = set()
        for child in children:
            if child == TRUE:
                return TRUE
            if child == FALSE:
                continue
            if self.nodes[child][0] == "or":
                grand = self.nodes[child][1]
            else:
                grand = (child,)
            for g in grand:
                if g not in seen:
                    seen.add(g)
                    flat.append(g)
        if not flat:
            return FALSE
        if len(flat) == 1:
            return flat[0]
        return self._make(("or", tuple(flat)))

    def variables_in(self, root: int) -> list:
        """Var refs in first-appearance (depth-first) order under ``root``."""
        out: list = []
        seen_nodes = set()
        seen_refs = set()

        def visit(node_id: int):
            if node_id in seen_nodes:
                return
            seen_nodes.add(node_id)
            node = self.nodes[node_id]
            kind = node[0]
            if kind == "var":
                if node[1] not in seen_refs:
                    seen_refs.add(node[1])
                    out.append(node[1])
            elif kind == "not":
                visit(node[1])
            elif kind in ("and", "or"):
                for child in node[1]:
                    visit(child)

        visit(root)
        return out

    def to_text(self, root: int) -> str:
        node = self.nodes[root]
        kind = node[0]
        if kind == "false":
            return "false"
        if kind == "true":
            return "true"
        if kind == "var":
            return _ref_text(node[1])
        if kind == "not":
            return "~" + self.to_text(node[1])
        joiner = " & " if kind == "and" else " | "
        return "(" + joiner.join(self.to_text(c) for c in node[1]) + ")"


def _ref_text(ref) -> str:
    if ref[0] == "fact":
        return f"f{ref[1]}"
    return f"g{ref[1]}.{ref[2]}"


# --- AD rewrite -----------------------------------------------------------------


def chain_probabilities(probs: list[float]) -> list[float]:
    """Sequential-choice probabilities: pi_k = p_k / (1 - sum(p_:k))."""
    out = []
    used = 0.0
    for k, p in enumerate(probs):
        denom = 1.0 - used
        if denom <= 0.0:
            raise DegenerateAdError(
                f"annotated disjunction leaves no probability mass for head {k} "
                f"(heads so far sum to {used})"
            )
        out.append(p / denom)
        used += p
    return out


def rewrite_ads(gp: GroundProgram) -> GroundProgram:
    """Replace ground AD instances by chain facts and deterministic rules."""
    if not gp.ads:
        return gp
    out = GroundProgram(query=gp.query, answers=list(gp.answers))
    for kind, index in gp.events:
        if kind == "fact":
            fact = gp.facts[index]
            out.add_fact(fact.atom, fact.source)
        elif kind == "group":
            out.add_group(gp.groups[index])
        elif kind == "rule":
            out.add_rule(gp.rules[index])
    for ad in gp.ads:
        _rewrite_one_ad(out, ad)
    return out


def _rewrite_one_ad(out: GroundProgram, ad):
    n = len(ad.members)
    learnable = isinstance(ad.members[0][0], Learnable)
    if learnable:
        indices = tuple(spec.index for spec, _ in ad.members)
        total = 1.0  # load-time renormalization keeps learnable ADs on the simplex
    else:
        probs = [spec.p for spec, _ in ad.members]
        total = sum(probs)
    closed = total >= 1.0 - AD_SUM_TOLERANCE

    chain_refs: list[FactRef | None] = []
    used = 0.0
    for k in range(n):
        if closed and k == n - 1:
            chain_refs.append(None)
            continue
        atom = Atom("$adc", (Constant(ad.ad_id), Constant(k)))
        if learnable:
            source = AdChainLabel(indices, k)
        else:
            denom = 1.0 - used
            if denom <= 0.0:
                if probs[k] == 0.0:
                    pi = 0.0  # unreachable branch of an exhausted choice
                else:
                    raise DegenerateAdError(
                        f"annotated disjunction leaves no probability mass for "
                        f"head {k} (heads so far sum to {used})"
                    )
            else:
                pi = probs[k] / denom
            used += probs[k]
            source = FixedLabel(pi)
        chain_refs.append(FactRef(out.add_fact(atom, source)))

    for k, (_, head) in enumerate(ad.members):
        body = list(ad.body)
        body.extend(GroundLiteral(False, chain_refs[j]) for j in range(k))
        if chain_refs[k] is not None:
            body.append(GroundLiteral(True, chain_refs[k]))
        out.add_rule(GroundRule(head, tuple(body)))


# --- completion unfolding ----------------------------------------------------------


def build_formula(gp: GroundProgram, query: Atom | None = None) -> tuple[FormulaBuilder, int]:
    """Unfold the query's completion down to probabilistic-fact variables."""
    if gp.ads:
        raise ValueError("rewrite_ads must run before build_formula")
    if query is None:
        query = gp.query
    builder = FormulaBuilder()
    memo: dict[tuple[Atom, bool], int] = {}
    in_progress: set[tuple[Atom, bool]] = set()
    group_sizes = {g.group_id: len(g.domain) for g in gp.groups}

    def neural_member(group_id: int, outcome: int, positive: bool) -> int:
        # member k holds iff its sequential-choice chain selects outcome k:
        # no earlier chain variable fired and (unless k is last) variable k did
        n = group_sizes[group_id]
        conj = [
            builder.negate(builder.var(("nchain", group_id, j))) for j in range(outcome)
        ]
        if outcome < n - 1:
            conj.append(builder.var(("nchain", group_id, outcome)))
        member = builder.conj(conj)
        if positive:
            return member
        disj = [builder.var(("nchain", group_id, j)) for j in range(outcome)]
        if outcome < n - 1:
            disj.append(builder.negate(builder.var(("nchain", group_id, outcome))))
        return builder.disj(disj)

    def literal_formula(lit: GroundLiteral) -> int:
        ref = lit.ref
        if isinstance(ref, FactRef):
            var = builder.var(("fact", ref.fact_id))
            return var if lit.positive else builder.negate(var)
        if isinstance(ref, NeuralRef):
            return neural_member(ref.group_id, ref.outcome, lit.positive)
        assert isinstance(ref, DerivedRef)
        return unfold(ref.atom, lit.positive)

    def unfold(atom: Atom, positive: bool) -> int:
        key = (atom, positive)
        cached = memo.get(key)
        if cached is not None:
            return cached
        if key in in_progress:
            raise CyclicProgramError(
                f"completion of {format_atom(atom)} depends on itself"
            )
        in_progress.add(key)
        try:
            fact_id = gp.fact_by_atom.get(atom)
            rule_ids = gp.rules_by_atom.get(atom, ())
            if positive:
                parts: list[int] = []
                if fact_id is not None:
                    parts.append(builder.var(("fact", fact_id)))
                for rule_id in rule_ids:
                    rule = gp.rules[rule_id]
                    parts.append(builder.conj(literal_formula(l) for l in rule.body))
                result = builder.disj(parts)
            else:
                parts = []
                if fact_id is not None:
                    parts.append(builder.negate(builder.var(("fact", fact_id))))
                for rule_id in rule_ids:
                    rule = gp.rules[rule_id]
                    parts.append(
                        builder.disj(
                            literal_formula(GroundLiteral(not l.positive, l.ref))
                            for l in rule.body
                        )
                    )
                result = builder.conj(parts)
        finally:
            in_progress.discard(key)
        memo[key] = result
        return result

    # a query atom that is itself a bare fact or neural outcome
    direct_fact = gp.fact_by_atom.get(query)
    if direct_fact is not None and query not in gp.rules_by_atom:
        root = builder.var(("fact", direct_fact))
    elif query in gp.neural_by_atom and query not in gp.rules_by_atom:
        gid, outcome = gp.neural_by_atom[query]
        root = neural_member(gid, outcome, True)
    else:
        root = unfold(query, True)
    return builder, root
