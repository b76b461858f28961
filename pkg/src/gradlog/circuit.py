"""Knowledge compilation into reduced ordered binary decision diagrams.

Every variable is binary: an ordinary probabilistic fact or one chain
variable of an AD/neural group (see the transform module).  Compilation is
Shannon expansion with memoization on hash-consed restricted formulas; the
result is reduced, ordered, and by construction smooth, deterministic and
decomposable in the sense semiring evaluation requires: because every
variable's positive and negative labels sum to the multiplicative unit,
variables skipped along an edge sum out exactly.

Evaluation is one bottom-up pass with a per-call memo table, so compiled
circuits are immutable and reusable across labelings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import BudgetError, LabelError
from .transform import FALSE, TRUE, FormulaBuilder

DEFAULT_NODE_BUDGET = 10_000_000


@dataclass
class Circuit:
    """Decision nodes over an ordered variable list.

    ``nodes[i] = (position, (low_child, high_child))`` for i >= 2; ids 0 and 1
    are the FALSE/TRUE terminals.  ``order[position]`` is the variable ref,
    ``("fact", fact_id)`` or ``("nchain", group_id, k)``.
    """

    order: list
    nodes: list = field(default_factory=lambda: [("terminal", False), ("terminal", True)])
    root: int = FALSE

    def is_terminal(self, node_id: int) -> bool:
        return node_id < 2

    @property
    def n_decision_nodes(self) -> int:
        return len(self.nodes) - 2


def default_order(builder: FormulaBuilder, root: int) -> list:
    """First-appearance (depth-first) order of the formula's variables."""
    return builder.variables_in(root)


def compile_formula(
    builder: FormulaBuilder,
    root: int,
    order: list | None = None,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> Circuit:
    """Shannon expansion of ``root`` over ``order``."""
    if order is None:
        order = default_order(builder, root)
    var_position = {ref: i for i, ref in enumerate(order)}
    circuit = Circuit(order=list(order))
    unique: dict = {}
    compile_memo: dict[int, int] = {}
    minpos_memo: dict[int, int] = {}
    restrict_memo: dict = {}
    nodes = builder.nodes
    end = len(order)

    def min_position(f: int) -> int:
        if f < 2:
            return end
        cached = minpos_memo.get(f)
        if cached is not None:
            return cached
        node = nodes[f]
        kind = node[0]
        if kind == "var":
            pos = var_position.get(node[1])
            if pos is None:
                raise LabelError(f"formula variable {node[1]} missing from the order")
            result = pos
        elif kind == "not":
            result = min_position(node[1])
        else:
            result = min(min_position(c) for c in node[1])
        minpos_memo[f] = result
        return result

    def restrict(f: int, position: int, value: bool) -> int:
        if f < 2:
            return f
        key = (f, position, value)
        cached = restrict_memo.get(key)
        if cached is not None:
            return cached
        node = nodes[f]
        kind = node[0]
        if kind == "var":
            if var_position[node[1]] != position:
                result = f
            else:
                result = TRUE if value else FALSE
        elif kind == "not":
            result = builder.negate(restrict(node[1], position, value))
        elif kind == "and":
            result = builder.conj(restrict(c, position, value) for c in node[1])
        else:
            result = builder.disj(restrict(c, position, value) for c in node[1])
        restrict_memo[key] = result
        return result

    def build(f: int) -> int:
        if f < 2:
            return f
        cached = compile_memo.get(f)
        if cached is not None:
            return cached
        position = min_position(f)
        low = build(restrict(f, position, False))
        high = build(restrict(f, position, True))
        if low == high:
            result = low
        else:
            ukey = (position, low, high)
            result = unique.get(ukey)
            if result is None:
                if circuit.n_decision_nodes >= node_budget:
                    raise BudgetError(f"circuit node budget {node_budget} exceeded")
                result = len(circuit.nodes)
                circuit.nodes.append((position, (low, high)))
                unique[ukey] = result
        compile_memo[f] = result
        return result

    circuit.root = build(root)
    return circuit


def evaluate(circuit: Circuit, labeling, values_out: dict | None = None):
    """Bottom-up semiring evaluation; one visit per node.

    Skipped variables contribute their label sum, which is the unit for
    every binary variable, so no explicit smoothing is needed.
    """
    semiring = labeling.semiring
    labels = [
        (labeling.label(ref, False), labeling.label(ref, True)) for ref in circuit.order
    ]
    memo: dict[int, object] = {FALSE: semiring.zero(), TRUE: semiring.one()}
    stack = [circuit.root]
    while stack:
        node_id = stack.pop()
        if node_id in memo:
            continue
        position, (low, high) = circuit.nodes[node_id]
        missing = [c for c in (low, high) if c not in memo]
        if missing:
            stack.append(node_id)
            stack.extend(missing)
            continue
        value = semiring.add(
            semiring.mul(labels[position][0], memo[low]),
            semiring.mul(labels[position][1], memo[high]),
        )
        memo[node_id] = value
    if values_out is not None:
        values_out.update(memo)
    return memo[circuit.root]


def export_dot(circuit: Circuit, labeling=None, var_names=None) -> str:
    """GraphViz rendering; optional per-node semiring annotations.

    Dashed edges are the false branch; solid edges the true branch.
    """
    annotations: dict[int, object] = {}
    if labeling is not None:
        evaluate(circuit, labeling, values_out=annotations)

    def name_of(position: int) -> str:
        ref = circuit.order[position]
        if var_names and ref in var_names:
            return var_names[ref]
        if ref[0] == "fact":
            return f"f{ref[1]}"
        return f"g{ref[1]}.{ref[2]}"

    def annotation(node_id: int) -> str:
        if node_id not in annotations:
            return ""
        value = annotations[node_id]
        if isinstance(value, tuple):
            grad = ",".join(f"{v:.4g}" for v in value[1])
            return f"\\n{value[0]:.6g}\\n[{grad}]"
        return f"\\n{value:.6g}"

    lines = ["digraph circuit {", "  node [shape=ellipse];"]
    reachable = set()
    stack = [circuit.root]
    while stack:
        node_id = stack.pop()
        if node_id in reachable:
            continue
        reachable.add(node_id)
        if not circuit.is_terminal(node_id):
            stack.extend(circuit.nodes[node_id][1])
    for node_id in sorted(reachable):
        if circuit.is_terminal(node_id):
            label = "TRUE" if node_id == TRUE else "FALSE"
            lines.append(f'  n{node_id} [shape=box,label="{label}{annotation(node_id)}"];')
        else:
            position, (low, high) = circuit.nodes[node_id]
            lines.append(f'  n{node_id} [label="{name_of(position)}{annotation(node_id)}"];')
            lines.append(f"  n{node_id} -> n{low} [style=dashed];")
            lines.append(f"  n{node_id} -> n{high};")
    lines.append("}")
    return "\n".join(lines) + "\n"
