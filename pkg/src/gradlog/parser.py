"""Parser for probabilistic logic programs with neural predicates.

Surface syntax (one statement per ``.``-terminated clause):

    0.1::burglary.                                fixed probabilistic fact
    t(0.5)::is_heads.                             learnable fact
    0.4::eq(none);0.4::eq(mild);0.2::eq(severe).  annotated disjunction
    nn(m_digit, X, [0,...,9])::digit(X,0);...;digit(X,9).   neural AD
    alarm :- earthquake.                          rule
    calls(X) :- alarm, \\+sleeps(X).              negation as failure
    slot(X,Y,Z) :- Z is X+Y, Z > 3.               arithmetic builtins
    query(calls(mary)).                           query directive

``[0,...,9]`` expands to the ten integers; ``h(X,0);...;h(X,9)`` expands a
head sequence over the final integer argument.  ``%`` starts a comment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DatasetError, ParseError, ProgramError
from .terms import (
    Atom,
    Clause,
    Compound,
    Constant,
    Literal,
    Term,
    Variable,
    format_atom,
    format_literal,
    format_term,
    is_ground,
    make_list,
)

COMPARISON_OPS = ("is", "=:=", "=\\=", ">=", "=<", ">", "<")
AD_SUM_TOLERANCE = 1e-9


# --- probability annotations ----------------------------------------------


@dataclass(frozen=True)
class Fixed:
    """A literal probability written in the program."""

    p: float


@dataclass(frozen=True)
class Learnable:
    """A ``t(p)`` annotation; ``index`` keys into the parameter store."""

    index: int
    init: float


ProbSpec = Fixed | Learnable


@dataclass(frozen=True)
class ProbFact:
    spec: ProbSpec
    atom: Atom


@dataclass(frozen=True)
class AnnotatedDisjunction:
    heads: tuple[tuple[ProbSpec, Atom], ...]
    body: tuple[Literal, ...]


@dataclass(frozen=True)
class NeuralAD:
    model_id: str
    inputs: tuple[Term, ...]
    domain: tuple[Term, ...]
    heads: tuple[Atom, ...]
    body: tuple[Literal, ...]


@dataclass
class Program:
    facts: list[ProbFact] = field(default_factory=list)
    ads: list[AnnotatedDisjunction] = field(default_factory=list)
    nads: list[NeuralAD] = field(default_factory=list)
    rules: list[Clause] = field(default_factory=list)
    queries: list[Atom] = field(default_factory=list)
    # Initial values for learnable parameters, indexed by Learnable.index;
    # AD members are grouped for renormalization.
    param_init: list[float] = field(default_factory=list)
    param_groups: list[list[int]] = field(default_factory=list)
    param_names: list[str] = field(default_factory=list)
    # source statement order, for faithful pretty-printing
    statements: list[tuple[str, int]] = field(default_factory=list)

    @property
    def n_params(self) -> int:
        return len(self.param_init)

    def signature(self):
        """Structural identity used by round-trip tests."""
        return (
            tuple(self.facts),
            tuple(self.ads),
            tuple(self.nads),
            tuple(self.rules),
            tuple(self.queries),
            tuple(self.param_init),
            tuple(map(tuple, self.param_groups)),
        )


@dataclass(frozen=True)
class QueryExample:
    query: Atom
    target: float


# --- tokenizer --------------------------------------------------------------

_SYMBOLS = (
    "::",
    ":-",
    "=:=",
    "=\\=",
    ">=",
    "=<",
    "\\+",
    "//",
    "(",
    ")",
    "[",
    "]",
    "|",
    ";",
    ",",
    "+",
    "-",
    "*",
    ">",
    "<",
)


@dataclass(frozen=True)
class Token:
    kind: str  # name | var | int | float | sym | dot | ellipsis | eof
    value: object
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "%":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if text.startswith("...", i):
            tokens.append(Token("ellipsis", "...", start_line, start_col))
            i += 3
            col += 3
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
                tokens.append(Token("float", float(text[i:j]), start_line, start_col))
            else:
                tokens.append(Token("int", int(text[i:j]), start_line, start_col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "var" if (word[0].isupper() or word[0] == "_") else "name"
            tokens.append(Token(kind, word, start_line, start_col))
            col += j - i
            i = j
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(Token("sym", sym, start_line, start_col))
                i += len(sym)
                col += len(sym)
                break
        else:
            if ch == ".":
                tokens.append(Token("dot", ".", start_line, start_col))
                i += 1
                col += 1
            else:
                raise ParseError(f"unexpected character {ch!r}", start_line, start_col)
    tokens.append(Token("eof", None, line, col))
    return tokens


# --- recursive-descent parser ----------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        self._anon = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, kind: str, value=None) -> Token:
        tok = self.next()
        if tok.kind != kind or (value is not None and tok.value != value):
            want = value if value is not None else kind
            raise ParseError(f"expected {want!r}, found {tok.value!r}", tok.line, tok.column)
        return tok

    def at(self, kind: str, value=None, ahead: int = 0) -> bool:
        tok = self.peek(ahead)
        return tok.kind == kind and (value is None or tok.value == value)

    def error(self, message: str) -> ParseError:
        tok = self.peek()
        return ParseError(message, tok.line, tok.column)

    # terms ------------------------------------------------------------

    def parse_term(self) -> Term:
        """Arithmetic expression grammar; plain terms are its atoms."""
        return self._additive()

    def _additive(self) -> Term:
        left = self._multiplicative()
        while self.at("sym", "+") or self.at("sym", "-"):
            op = self.next().value
            right = self._multiplicative()
            left = Compound(op, (left, right))
        return left

    def _multiplicative(self) -> Term:
        left = self._primary()
        while self.at("sym", "*") or self.at("sym", "//") or self.at("name", "mod"):
            op = self.next().value
            right = self._primary()
            left = Compound(op, (left, right))
        return left

    def _primary(self) -> Term:
        tok = self.peek()
        if tok.kind == "int":
            self.next()
            return Constant(tok.value)
        if tok.kind == "var":
            self.next()
            if tok.value == "_":
                self._anon += 1
                return Variable(f"_A{self._anon}")
            return Variable(tok.value)
        if tok.kind == "name":
            self.next()
            if self.at("sym", "("):
                self.next()
                args = self._term_list(")")
                return Compound(tok.value, args)
            return Constant(tok.value)
        if tok.kind == "sym" and tok.value == "[":
            return self._list_term()
        if tok.kind == "sym" and tok.value == "(":
            self.next()
            inner = self.parse_term()
            self.expect("sym", ")")
            return inner
        raise self.error(f"expected a term, found {tok.value!r}")

    def _term_list(self, closing: str) -> list[Term]:
        items = [self.parse_term()]
        while self.at("sym", ","):
            self.next()
            items.append(self.parse_term())
        self.expect("sym", closing)
        return items

    def _list_term(self) -> Term:
        self.expect("sym", "[")
        if self.at("sym", "]"):
            self.next()
            return Constant("[]")
        items: list[object] = []
        if self.at("ellipsis"):
            self.next()
            items.append("...")
        else:
            items.append(self.parse_term())
        while self.at("sym", ","):
            self.next()
            if self.at("ellipsis"):
                self.next()
                items.append("...")
            else:
                items.append(self.parse_term())
        tail: Term = Constant("[]")
        if self.at("sym", "|"):
            self.next()
            tail = self.parse_term()
        self.expect("sym", "]")
        return make_list(self._expand_ellipsis(items), tail)

    def _expand_ellipsis(self, items: list) -> list[Term]:
        """Replace ``a, ..., b`` with the inclusive integer range between."""
        out: list[Term] = []
        for idx, item in enumerate(items):
            if item != "...":
                out.append(item)
                continue
            if idx == 0 or idx == len(items) - 1:
                raise self.error("'...' needs integer endpoints on both sides")
            prev, nxt = items[idx - 1], items[idx + 1]
            if not (
                isinstance(prev, Constant)
                and isinstance(nxt, Constant)
                and isinstance(prev.value, int)
                and isinstance(nxt.value, int)
            ):
                raise self.error("'...' endpoints must be integers")
            step = 1 if nxt.value >= prev.value else -1
            out.extend(Constant(v) for v in range(prev.value + step, nxt.value, step))
        return out

    # atoms and bodies ---------------------------------------------------

    def _term_to_atom(self, term: Term) -> Atom:
        if isinstance(term, Compound) and term.functor != ".":
            return Atom(term.functor, term.args)
        if isinstance(term, Constant) and isinstance(term.value, str) and term.value != "[]":
            return Atom(term.value)
        raise self.error(f"expected an atom, found {format_term(term)}")

    def parse_body_atom(self) -> Atom:
        left = self.parse_term()
        for op in COMPARISON_OPS:
            kind = "name" if op in ("is",) else "sym"
            if self.at(kind, op):
                self.next()
                right = self.parse_term()
                return Atom(op, (left, right))
        return self._term_to_atom(left)

    def parse_literal(self) -> Literal:
        if self.at("sym", "\\+"):
            self.next()
            return Literal(self.parse_body_atom(), positive=False)
        return Literal(self.parse_body_atom())

    def parse_body(self) -> tuple[Literal, ...]:
        body = [self.parse_literal()]
        while self.at("sym", ","):
            self.next()
            body.append(self.parse_literal())
        return tuple(body)


# --- program assembly --------------------------------------------------------


class _ProgramBuilder:
    def __init__(self):
        self.program = Program()
        self._nad_predicates: dict[tuple[str, int], str] = {}

    def new_param(self, init: float, name: str) -> int:
        index = len(self.program.param_init)
        self.program.param_init.append(init)
        self.program.param_names.append(name)
        return index

    def add_fact(self, spec_init, atom: Atom, parser: _Parser):
        if isinstance(spec_init, float):
            spec: ProbSpec = Fixed(spec_init)
        else:
            spec = Learnable(self.new_param(spec_init[0], format_atom(atom)), spec_init[0])
        self.program.statements.append(("fact", len(self.program.facts)))
        self.program.facts.append(ProbFact(spec, atom))

    def add_ad(self, raw_heads, body, parser: _Parser):
        fixed = [s for s, _ in raw_heads if isinstance(s, float)]
        learnable = [s for s, _ in raw_heads if not isinstance(s, float)]
        if fixed and learnable:
            raise ProgramError(
                "annotated disjunction mixes fixed and learnable probabilities: "
                + _heads_text(raw_heads)
            )
        heads: list[tuple[ProbSpec, Atom]] = []
        if fixed:
            total = sum(fixed)
            if total > 1.0 + AD_SUM_TOLERANCE:
                raise ProgramError(
                    f"annotated disjunction probabilities sum to {total}, above 1: "
                    + _heads_text(raw_heads)
                )
            heads = [(Fixed(p), atom) for (p, atom) in raw_heads]
        else:
            total = sum(init for (init,), _ in raw_heads)
            if total <= 0:
                raise ProgramError("learnable AD has nonpositive total initial mass")
            group: list[int] = []
            for (init,), atom in raw_heads:
                index = self.new_param(init / total, format_atom(atom))
                group.append(index)
                heads.append((Learnable(index, init / total), atom))
            self.program.param_groups.append(group)
        self.program.statements.append(("ad", len(self.program.ads)))
        self.program.ads.append(AnnotatedDisjunction(tuple(heads), tuple(body)))

    def add_nad(self, model_id, inputs, domain, heads, body):
        key = heads[0].key
        if any(h.key != key for h in heads):
            raise ProgramError(f"neural AD heads disagree on predicate: {model_id}")
        if key in self._nad_predicates:
            raise ProgramError(
                f"duplicate model binding for {key[0]}/{key[1]}: "
                f"{self._nad_predicates[key]} and {model_id}"
            )
        outputs = [h.args[-1] for h in heads]
        if len(set(outputs)) != len(outputs):
            raise ProgramError(f"neural AD for {model_id} repeats an output value")
        self._nad_predicates[key] = model_id
        self.program.statements.append(("nad", len(self.program.nads)))
        self.program.nads.append(NeuralAD(model_id, tuple(inputs), tuple(domain), tuple(heads), tuple(body)))

    def finish(self) -> Program:
        prog = self.program
        fact_like = {f.atom.key for f in prog.facts}
        fact_like |= {atom.key for ad in prog.ads for _, atom in ad.heads}
        for key, model in self._nad_predicates.items():
            if key in fact_like:
                raise ProgramError(
                    f"{key[0]}/{key[1]} is declared both as a neural predicate ({model}) "
                    "and as a probabilistic fact or AD head"
                )
        return prog


def _heads_text(raw_heads) -> str:
    return ";".join(format_atom(atom) for _, atom in raw_heads)


def parse_program(text: str) -> Program:
    parser = _Parser(tokenize(text))
    builder = _ProgramBuilder()
    while not parser.at("eof"):
        _parse_statement(parser, builder)
    return builder.finish()


def _parse_statement(parser: _Parser, builder: _ProgramBuilder):
    if parser.at("name", "nn") and parser.at("sym", "(", ahead=1):
        _parse_nad(parser, builder)
        return
    spec = _try_prob_spec(parser)
    if spec is not None:
        _parse_annotated(parser, builder, spec)
        return
    head = parser._term_to_atom(parser.parse_term())
    if head.predicate == "query" and head.arity == 1 and parser.at("dot"):
        parser.next()
        inner = head.args[0]
        builder.program.statements.append(("query", len(builder.program.queries)))
        builder.program.queries.append(parser._term_to_atom(inner))
        return
    body: tuple[Literal, ...] = ()
    if parser.at("sym", ":-"):
        parser.next()
        body = parser.parse_body()
    parser.expect("dot")
    builder.program.statements.append(("rule", len(builder.program.rules)))
    builder.program.rules.append(Clause(head, body))


def _try_prob_spec(parser: _Parser):
    """Return float (fixed), (init,) (learnable) or None, consuming on match."""
    if parser.at("float") or parser.at("int"):
        if parser.at("sym", "::", ahead=1):
            value = float(parser.next().value)
            parser.next()
            return value
        return None
    if (
        parser.at("name", "t")
        and parser.at("sym", "(", ahead=1)
        and parser.peek(2).kind in ("float", "int")
        and parser.at("sym", ")", ahead=3)
        and parser.at("sym", "::", ahead=4)
    ):
        parser.next()
        parser.next()
        value = float(parser.next().value)
        parser.next()
        parser.next()
        return (value,)
    return None


def _parse_annotated(parser: _Parser, builder: _ProgramBuilder, first_spec):
    heads = [(first_spec, parser._term_to_atom(parser.parse_term()))]
    while parser.at("sym", ";"):
        parser.next()
        spec = _try_prob_spec(parser)
        if spec is None:
            raise parser.error("every head of an annotated disjunction needs a probability")
        heads.append((spec, parser._term_to_atom(parser.parse_term())))
    body: tuple[Literal, ...] = ()
    if parser.at("sym", ":-"):
        parser.next()
        body = parser.parse_body()
    parser.expect("dot")
    if len(heads) == 1 and not body:
        builder.add_fact(heads[0][0], heads[0][1], parser)
    else:
        builder.add_ad(heads, body, parser)


def _parse_nad(parser: _Parser, builder: _ProgramBuilder):
    parser.expect("name", "nn")
    parser.expect("sym", "(")
    model_tok = parser.expect("name")
    parser.expect("sym", ",")
    args = parser._term_list(")")
    if len(args) < 1:
        raise parser.error("nn(...) needs input terms and a domain list")
    domain_term = args[-1]
    inputs = args[:-1]
    domain, tail = _domain_values(domain_term, parser)
    parser.expect("sym", "::")
    heads = _parse_head_sequence(parser)
    body: tuple[Literal, ...] = ()
    if parser.at("sym", ":-"):
        parser.next()
        body = parser.parse_body()
    parser.expect("dot")
    if len(heads) != len(domain):
        raise ProgramError(
            f"neural AD for {model_tok.value} declares {len(domain)} outputs "
            f"but {len(heads)} heads"
        )
    for atom, value in zip(heads, domain):
        if atom.args and atom.args[-1] != value:
            raise ProgramError(
                f"neural AD head {format_atom(atom)} does not end in domain value "
                f"{format_term(value)}"
            )
    builder.add_nad(model_tok.value, inputs, domain, heads, body)


def _domain_values(term: Term, parser: _Parser) -> tuple[tuple[Term, ...], Term]:
    from .terms import list_parts

    items, tail = list_parts(term)
    if tail != Constant("[]") or not items:
        raise parser.error("nn(...) domain must be a proper non-empty list")
    if not all(is_ground(v) for v in items):
        raise parser.error("nn(...) domain values must be ground")
    return tuple(items), tail


def _parse_head_sequence(parser: _Parser) -> list[Atom]:
    """Heads separated by ';', allowing the ``h(X,0);...;h(X,9)`` ellipsis."""
    items: list[object] = [parser._term_to_atom(parser.parse_term())]
    while parser.at("sym", ";"):
        parser.next()
        if parser.at("ellipsis"):
            parser.next()
            items.append("...")
        else:
            items.append(parser._term_to_atom(parser.parse_term()))
    out: list[Atom] = []
    for idx, item in enumerate(items):
        if item != "...":
            out.append(item)
            continue
        if idx == 0 or idx == len(items) - 1:
            raise parser.error("head ellipsis needs heads on both sides")
        prev, nxt = items[idx - 1], items[idx + 1]
        if not (
            isinstance(prev, Atom)
            and isinstance(nxt, Atom)
            and prev.args
            and nxt.args
            and prev.args[:-1] == nxt.args[:-1]
            and isinstance(prev.args[-1], Constant)
            and isinstance(nxt.args[-1], Constant)
            and isinstance(prev.args[-1].value, int)
            and isinstance(nxt.args[-1].value, int)
        ):
            raise parser.error("head ellipsis endpoints must differ only in a final integer")
        lo, hi = prev.args[-1].value, nxt.args[-1].value
        step = 1 if hi >= lo else -1
        for v in range(lo + step, hi, step):
            out.append(Atom(prev.predicate, prev.args[:-1] + (Constant(v),)))
    return out


# --- datasets and vector stores ----------------------------------------------


def parse_dataset(text: str) -> list[QueryExample]:
    """One example per line: ``<ground query> [<target probability>]``."""
    examples: list[QueryExample] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        parser = _Parser(tokenize(line))
        try:
            query = parser._term_to_atom(parser.parse_term())
        except ParseError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from exc
        target = 1.0
        if parser.at("float") or parser.at("int"):
            target = float(parser.next().value)
        if not parser.at("eof"):
            raise DatasetError(f"line {lineno}: trailing input after {format_atom(query)}")
        if not is_ground(query):
            raise DatasetError(f"line {lineno}: query {format_atom(query)} is not ground")
        if not 0.0 <= target <= 1.0:
            raise DatasetError(f"line {lineno}: target probability {target} outside [0,1]")
        examples.append(QueryExample(query, target))
    return examples


def parse_query(text: str) -> Atom:
    """Parse a single query or builtin atom from text (used by the CLI)."""
    parser = _Parser(tokenize(text))
    atom = parser.parse_body_atom()
    if parser.at("dot"):
        parser.next()
    if not parser.at("eof"):
        raise ParseError(f"trailing input after {format_atom(atom)}")
    return atom


def parse_vectors(text: str) -> dict[str, list[float]]:
    """``symbol v1 v2 ... vk`` per line."""
    out: dict[str, list[float]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            out[parts[0]] = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: bad vector entry: {raw!r}") from exc
        if len(parts) < 2:
            raise DatasetError(f"line {lineno}: vector for {parts[0]} is empty")
    return out


# --- pretty printing ----------------------------------------------------------


def format_prob_spec(spec: ProbSpec) -> str:
    if isinstance(spec, Fixed):
        return repr(spec.p)
    return f"t({spec.init!r})"


def program_to_text(program: Program) -> str:
    statements = program.statements or (
        [("fact", i) for i in range(len(program.facts))]
        + [("ad", i) for i in range(len(program.ads))]
        + [("nad", i) for i in range(len(program.nads))]
        + [("rule", i) for i in range(len(program.rules))]
        + [("query", i) for i in range(len(program.queries))]
    )
    lines: list[str] = []
    for kind, index in statements:
        if kind == "fact":
            fact = program.facts[index]
            lines.append(f"{format_prob_spec(fact.spec)}::{format_atom(fact.atom)}.")
        elif kind == "ad":
            ad = program.ads[index]
            heads = ";".join(
                f"{format_prob_spec(s)}::{format_atom(a)}" for s, a in ad.heads
            )
            lines.append(heads + _body_suffix(ad.body))
        elif kind == "nad":
            nad = program.nads[index]
            ins = ",".join(format_term(t) for t in nad.inputs)
            domain = "[" + ",".join(format_term(v) for v in nad.domain) + "]"
            heads = ";".join(format_atom(h) for h in nad.heads)
            lines.append(
                f"nn({nad.model_id},{ins},{domain})::{heads}" + _body_suffix(nad.body)
            )
        elif kind == "rule":
            lines.append(str(program.rules[index]))
        else:
            lines.append(f"query({format_atom(program.queries[index])}).")
    return "\n".join(lines) + "\n"


def _body_suffix(body: tuple[Literal, ...]) -> str:
    if not body:
        return "."
    return " :- " + ", ".join(format_literal(l) for l in body) + "."
