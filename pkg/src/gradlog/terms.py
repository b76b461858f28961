"""Terms, atoms, literals, clauses, substitutions and unification.

The symbolic substrate for the whole engine.  Values are immutable after
construction and safe to share; hashes are cached because grounding performs
heavy dictionary traffic on terms.

Conventions follow Prolog: variable names start with an uppercase letter (or
``_``), constants are lowercase symbols or integers.  Lists are sugar over
``'.'/2`` cells with ``[]`` as the empty list.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Mapping, Union


class Term:
    """Base class for constants, variables and compound terms."""

    __slots__ = ()


class Constant(Term):
    """An atomic symbol or an integer."""

    __slots__ = ("value", "_hash")
    grnd = True  # constants are always ground

    def __init__(self, value: Union[str, int]):
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "_hash", hash(("c", value)))

    def __setattr__(self, *args):
        raise AttributeError("Constant is immutable")

    def __eq__(self, other):
        return isinstance(other, Constant) and self.value == other.value

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Constant({self.value!r})"

    def __str__(self):
        return str(self.value)


class Variable(Term):
    __slots__ = ("name", "_hash")
    grnd = False

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "_hash", hash(("v", name)))

    def __setattr__(self, *args):
        raise AttributeError("Variable is immutable")

    def __eq__(self, other):
        return isinstance(other, Variable) and self.name == other.name

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Variable({self.name!r})"

    def __str__(self):
        return self.name


class Compound(Term):
    __slots__ = ("functor", "args", "_hash", "grnd")

    def __init__(self, functor: str, args: Iterable[Term]):
        object.__setattr__(self, "functor", functor)
        object.__setattr__(self, "args", tuple(args))
        object.__setattr__(self, "_hash", hash(("f", functor, self.args)))
        object.__setattr__(self, "grnd", all(a.grnd for a in self.args))

    def __setattr__(self, *args):
        raise AttributeError("Compound is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, Compound)
            and self._hash == other._hash
            and self.functor == other.functor
            and self.args == other.args
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Compound({self.functor!r}, {list(self.args)!r})"

    def __str__(self):
        return format_term(self)


EMPTY_LIST = Constant("[]")
LIST_FUNCTOR = "."


def make_list(items: Iterable[Term], tail: Term = EMPTY_LIST) -> Term:
    """Build a ``'.'/2`` chain from ``items`` ending in ``tail``."""
    out = tail
    for item in reversed(list(items)):
        out = Compound(LIST_FUNCTOR, (item, out))
    return out


def list_parts(term: Term) -> tuple[list[Term], Term]:
    """Split a list term into (elements, tail); tail is ``[]`` for proper lists."""
    items: list[Term] = []
    while isinstance(term, Compound) and term.functor == LIST_FUNCTOR and len(term.args) == 2:
        items.append(term.args[0])
        term = term.args[1]
    return items, term


class Atom:
    """A predicate applied to terms, e.g. ``digit(d3, 5)``."""

    __slots__ = ("predicate", "args", "_hash", "grnd")

    def __init__(self, predicate: str, args: Iterable[Term] = ()):
        object.__setattr__(self, "predicate", predicate)
        object.__setattr__(self, "args", tuple(args))
        object.__setattr__(self, "_hash", hash(("a", predicate, self.args)))
        object.__setattr__(self, "grnd", all(a.grnd for a in self.args))

    def __setattr__(self, *args):
        raise AttributeError("Atom is immutable")

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def key(self) -> tuple[str, int]:
        """The (predicate, arity) pair that identifies a definition."""
        return (self.predicate, len(self.args))

    def __eq__(self, other):
        return (
            isinstance(other, Atom)
            and self._hash == other._hash
            and self.predicate == other.predicate
            and self.args == other.args
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Atom({self.predicate!r}, {list(self.args)!r})"

    def __str__(self):
        return format_atom(self)


class Literal:
    """An atom or its negation-as-failure (``\\+``)."""

    __slots__ = ("atom", "positive", "_hash")

    def __init__(self, atom: Atom, positive: bool = True):
        object.__setattr__(self, "atom", atom)
        object.__setattr__(self, "positive", positive)
        object.__setattr__(self, "_hash", hash(("l", atom, positive)))

    def __setattr__(self, *args):
        raise AttributeError("Literal is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, Literal)
            and self.positive == other.positive
            and self.atom == other.atom
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        sign = "" if self.positive else "\\+"
        return f"Literal({sign}{self.atom})"

    def __str__(self):
        return format_literal(self)


class Clause:
    """``head :- body``; an empty body makes a fact."""

    __slots__ = ("head", "body", "_hash")

    def __init__(self, head: Atom, body: Iterable[Literal] = ()):
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "body", tuple(body))
        object.__setattr__(self, "_hash", hash(("r", head, self.body)))

    def __setattr__(self, *args):
        raise AttributeError("Clause is immutable")

    def __eq__(self, other):
        return isinstance(other, Clause) and self.head == other.head and self.body == other.body

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Clause({self.head} :- {', '.join(map(str, self.body))})"

    def __str__(self):
        return format_clause(self)


Substitution = Mapping[Variable, Term]


def walk(term: Term, theta: Substitution) -> Term:
    """Follow variable bindings until a non-variable or unbound variable."""
    while isinstance(term, Variable):
        bound = theta.get(term)
        if bound is None:
            return term
        term = bound
    return term


def apply_substitution(expr, theta: Substitution):
    """Simultaneously replace every bound variable (one step, no chains)."""
    if not theta:
        return expr
    if getattr(expr, "grnd", False):
        return expr
    if isinstance(expr, Variable):
        return theta.get(expr, expr)
    if isinstance(expr, Constant):
        return expr
    if isinstance(expr, Compound):
        new_args = tuple(apply_substitution(a, theta) for a in expr.args)
        if new_args == expr.args:
            return expr
        return Compound(expr.functor, new_args)
    if isinstance(expr, Atom):
        new_args = tuple(apply_substitution(a, theta) for a in expr.args)
        if new_args == expr.args:
            return expr
        return Atom(expr.predicate, new_args)
    if isinstance(expr, Literal):
        return Literal(apply_substitution(expr.atom, theta), expr.positive)
    if isinstance(expr, Clause):
        return Clause(
            apply_substitution(expr.head, theta),
            tuple(apply_substitution(lit, theta) for lit in expr.body),
        )
    raise TypeError(f"cannot substitute into {type(expr).__name__}")


def substitute(expr, theta: Substitution):
    """Chain-following application, for occurs-checked binding maps."""
    if not theta:
        return expr
    if getattr(expr, "grnd", False):
        return expr
    if isinstance(expr, Variable):
        value = walk(expr, theta)
        if isinstance(value, Variable):
            return value
        return substitute(value, theta)
    if isinstance(expr, Constant):
        return expr
    if isinstance(expr, Compound):
        new_args = tuple(substitute(a, theta) for a in expr.args)
        if new_args == expr.args:
            return expr
        return Compound(expr.functor, new_args)
    if isinstance(expr, Atom):
        new_args = tuple(substitute(a, theta) for a in expr.args)
        if new_args == expr.args:
            return expr
        return Atom(expr.predicate, new_args)
    if isinstance(expr, Literal):
        return Literal(substitute(expr.atom, theta), expr.positive)
    if isinstance(expr, Clause):
        return Clause(
            substitute(expr.head, theta),
            tuple(substitute(lit, theta) for lit in expr.body),
        )
    raise TypeError(f"cannot substitute into {type(expr).__name__}")


def compose(theta1: Substitution, theta2: Substitution) -> dict[Variable, Term]:
    """Composition: apply(e, compose(t1, t2)) == apply(apply(e, t1), t2)."""
    out: dict[Variable, Term] = {}
    for var, term in theta1.items():
        out[var] = apply_substitution(term, theta2)
    for var, term in theta2.items():
        if var not in out:
            out[var] = term
    return out


def occurs_in(var: Variable, term: Term, theta: Substitution) -> bool:
    if term.grnd:
        return False
    term = walk(term, theta)
    if isinstance(term, Variable):
        return term == var
    if isinstance(term, Compound):
        return any(occurs_in(var, a, theta) for a in term.args)
    return False


def unify_terms(a: Term, b: Term, theta: dict[Variable, Term] | None = None):
    """Most general unifier of two terms, with occurs-check.

    Returns an extended binding map or None on failure.  The result maps
    variables to possibly non-resolved terms; use :func:`resolve` or
    :func:`apply_substitution` to read values through chains.
    """
    theta = dict(theta) if theta else {}
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        if x.grnd and y.grnd:
            if x == y:
                continue
            return None
        x = walk(x, theta)
        y = walk(y, theta)
        if x == y:
            continue
        if isinstance(x, Variable):
            if occurs_in(x, y, theta):
                return None
            theta[x] = y
        elif isinstance(y, Variable):
            if occurs_in(y, x, theta):
                return None
            theta[y] = x
        elif isinstance(x, Compound) and isinstance(y, Compound):
            if x.functor != y.functor or len(x.args) != len(y.args):
                return None
            stack.extend(zip(x.args, y.args))
        else:
            return None
    return theta


def unify(a: Atom, b: Atom, theta: dict[Variable, Term] | None = None):
    """MGU of two atoms, or None.  Failure is a value, not an error.

    The result is fully resolved: applying it simultaneously to both atoms
    yields the same expression, and application is idempotent.
    """
    if a.predicate != b.predicate or len(a.args) != len(b.args):
        return None
    theta = dict(theta) if theta else {}
    for x, y in zip(a.args, b.args):
        theta = unify_terms(x, y, theta)
        if theta is None:
            return None
    return resolve(theta)


def resolve(theta: Substitution) -> dict[Variable, Term]:
    """Fully resolve binding chains so apply() becomes idempotent."""
    return {var: substitute(term, theta) for var, term in theta.items()}


def is_ground(expr) -> bool:
    """True iff no Variable occurs anywhere in the expression."""
    if isinstance(expr, (Variable, Constant, Compound, Atom)):
        return expr.grnd
    if isinstance(expr, Literal):
        return is_ground(expr.atom)
    if isinstance(expr, Clause):
        return is_ground(expr.head) and all(is_ground(l) for l in expr.body)
    raise TypeError(f"cannot check groundness of {type(expr).__name__}")


def variables_of(expr) -> set[Variable]:
    out: set[Variable] = set()

    def visit(e):
        if isinstance(e, Variable):
            out.add(e)
        elif isinstance(e, (Compound, Atom)):
            if e.grnd:
                return
            for a in e.args:
                visit(a)
        elif isinstance(e, Literal):
            visit(e.atom)
        elif isinstance(e, Clause):
            visit(e.head)
            for lit in e.body:
                visit(lit)

    visit(expr)
    return out


def rename_apart(clause: Clause, counter: Iterator[int]) -> Clause:
    """Fresh-variable renaming used before each resolution step."""
    mapping = {v: Variable(f"_R{next(counter)}") for v in variables_of(clause)}
    if not mapping:
        return clause
    return apply_substitution(clause, mapping)


# --- text rendering -------------------------------------------------------

_INFIX_OPS = {"is", "=:=", "=\\=", ">", "<", ">=", "=<"}
_ARITH_OPS = {"+", "-", "*", "//", "mod"}


def format_term(term: Term) -> str:
    if isinstance(term, (Constant, Variable)):
        return str(term)
    if isinstance(term, Compound):
        if term.functor == LIST_FUNCTOR and len(term.args) == 2:
            items, tail = list_parts(term)
            inner = ",".join(format_term(t) for t in items)
            if tail == EMPTY_LIST:
                return f"[{inner}]"
            return f"[{inner}|{format_term(tail)}]"
        if term.functor in _ARITH_OPS and len(term.args) == 2:
            lhs, rhs = term.args
            level = _ARITH_LEVEL[term.functor]
            return (
                f"{_format_operand(lhs, level, right=False)}"
                f"{_spaced(term.functor)}"
                f"{_format_operand(rhs, level, right=True)}"
            )
        inner = ",".join(format_term(t) for t in term.args)
        return f"{term.functor}({inner})"
    raise TypeError(f"not a term: {term!r}")


_ARITH_LEVEL = {"+": 1, "-": 1, "*": 2, "//": 2, "mod": 2}


def _spaced(op: str) -> str:
    return f" {op} " if op == "mod" else op


def _format_operand(term: Term, parent_level: int, right: bool) -> str:
    if isinstance(term, Compound) and term.functor in _ARITH_OPS:
        level = _ARITH_LEVEL[term.functor]
        if level < parent_level or (right and level == parent_level):
            return f"({format_term(term)})"
    return format_term(term)


def format_atom(atom: Atom) -> str:
    if atom.predicate in _INFIX_OPS and len(atom.args) == 2:
        lhs, rhs = atom.args
        return f"{format_term(lhs)} {atom.predicate} {format_term(rhs)}"
    if not atom.args:
        return atom.predicate
    inner = ",".join(format_term(t) for t in atom.args)
    return f"{atom.predicate}({inner})"


def format_literal(lit: Literal) -> str:
    text = format_atom(lit.atom)
    return text if lit.positive else f"\\+{text}"


def format_clause(clause: Clause) -> str:
    if not clause.body:
        return f"{format_atom(clause.head)}."
    body = ", ".join(format_literal(l) for l in clause.body)
    return f"{format_atom(clause.head)} :- {body}."
