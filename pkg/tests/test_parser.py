import pytest

from gradlog import tasks
from gradlog.errors import DatasetError, ParseError, ProgramError
from gradlog.parser import (
    Fixed,
    Learnable,
    parse_dataset,
    parse_program,
    parse_query,
    parse_vectors,
    program_to_text,
)
from gradlog.terms import Atom, Constant, Variable, make_list


def test_fixed_fact():
    prog = parse_program("0.1::burglary.")
    assert len(prog.facts) == 1
    assert prog.facts[0].spec == Fixed(0.1)
    assert prog.facts[0].atom == Atom("burglary")


def test_learnable_fact_gets_parameter_index():
    prog = parse_program("t(0.5)::is_heads.")
    spec = prog.facts[0].spec
    assert isinstance(spec, Learnable)
    assert spec.index == 0
    assert prog.param_init == [0.5]


def test_neural_ad_with_two_heads():
    prog = parse_program("nn(m_swap,X,[0,1])::swap(X,Y,0);swap(X,Y,1).")
    nad = prog.nads[0]
    assert nad.model_id == "m_swap"
    assert nad.inputs == (Variable("X"),)
    assert nad.domain == (Constant(0), Constant(1))
    assert len(nad.heads) == 2


def test_head_ellipsis_expansion():
    prog = parse_program("nn(m_digit, X, [0,...,9]) :: digit(X,0);...;digit(X,9).")
    nad = prog.nads[0]
    assert len(nad.domain) == 10
    assert len(nad.heads) == 10
    assert nad.heads[4] == Atom("digit", (Variable("X"), Constant(4)))


def test_multi_input_neural_ad():
    prog = parse_program(
        "nn(m_result,D1,D2,Carry,[0,...,9])::result(D1,D2,Carry,0);...;result(D1,D2,Carry,9)."
    )
    nad = prog.nads[0]
    assert len(nad.inputs) == 3
    assert len(nad.heads) == 10


def test_annotated_disjunction_sums_validated():
    parse_program("0.4::eq(none);0.4::eq(mild);0.2::eq(severe).")
    with pytest.raises(ProgramError):
        parse_program("0.8::a;0.8::b.")


def test_learnable_ad_renormalized_at_load():
    prog = parse_program("t(0.333)::col(red);t(0.333)::col(green);t(0.333)::col(blue).")
    assert prog.param_groups == [[0, 1, 2]]
    assert abs(sum(prog.param_init) - 1.0) < 1e-12


def test_mixing_fixed_and_learnable_in_ad_rejected():
    with pytest.raises(ProgramError):
        parse_program("0.5::a;t(0.5)::b.")


def test_duplicate_model_binding_rejected():
    text = """
    nn(m1,X,[0,1])::q(X,0);q(X,1).
    nn(m2,X,[0,1])::q(X,0);q(X,1).
    """
    with pytest.raises(ProgramError, match="duplicate model binding"):
        parse_program(text)


def test_neural_predicate_cannot_also_be_fact():
    text = """
    nn(m1,X,[0,1])::q(X,0);q(X,1).
    0.5::q(a,0).
    """
    with pytest.raises(ProgramError):
        parse_program(text)


def test_rules_and_negation_and_builtins():
    prog = parse_program("p(X) :- q(X), \\+r(X), X > 3, Y is X+1, Y =:= 5.")
    rule = prog.rules[0]
    assert len(rule.body) == 5
    assert not rule.body[1].positive
    assert rule.body[2].atom.predicate == ">"
    assert rule.body[3].atom.predicate == "is"
    assert rule.body[4].atom.predicate == "=:="


def test_arithmetic_precedence():
    prog = parse_program("p(Acc2) :- Acc2 is Nr+10*Acc.")
    expr = prog.rules[0].body[0].atom.args[1]
    assert str(expr) == "Nr+10*Acc"
    assert expr.functor == "+"
    assert expr.args[1].functor == "*"


def test_query_directive():
    prog = parse_program("0.5::win.\nquery(win).")
    assert prog.queries == [Atom("win")]


def test_list_terms_and_anonymous_variables():
    prog = parse_program("p([H|T],_,_) :- q([1,2,3]).")
    head = prog.rules[0].head
    assert head.args[1] != head.args[2]  # each _ is fresh
    body_list = prog.rules[0].body[0].atom.args[0]
    assert body_list == make_list([Constant(1), Constant(2), Constant(3)])


def test_comments_ignored():
    prog = parse_program("% header\n0.5::f. % trailing\n")
    assert len(prog.facts) == 1


def test_syntax_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_program("0.5::(bad.")
    assert "line 1" in str(err.value)


def test_nonground_probabilistic_fact_allowed_at_parse_but_grounder_rejects():
    # parser stores it; groundness is a grounding-time concern
    prog = parse_program("0.5::f(X).")
    assert len(prog.facts) == 1


VERBATIM_LISTINGS = {
    "t1": """\
nn(m_digit, X, [0,...,9]) :: digit(X,0);...;digit(X,9).

addition(X,Y,Z) :- digit(X,X2), digit(Y,Y2), Z is X2+Y2.
""",
    "t2": """\
nn(m_digit, X, [0,...,9]) :: digit(X,0);...;digit(X,9).

number([],Result,Result).
number([H|T],Acc,Result) :-
    digit(H,Nr),
    Acc2 is Nr+10*Acc,
    number(T,Acc2,Result).
number(X,Y) :- number(X,0,Y).

multi_addition(X,Y,Z) :- number(X,X2), number(Y,Y2), Z is X2+Y2.
""",
    "t3": """\
nn(m_result,D1,D2,Carry,[0,...,9])::result(D1,D2,Carry,0);
                                ...;result(D1,D2,Carry,9).

nn(m_carry,D1,D2,Carry,[0,1])::carry(D1,D2,Carry,0);carry(D1,D2,Carry,1).

slot(I1,I2,Carry,NewCarry,Result) :-
    result(I1,I2,Carry,Result),
    carry(I1,I2,Carry,NewCarry).

add([],[],[C],C,[]).

add([H1|T1],[H2|T2],C,Carry,[Digit|Res]) :-
    add(T1,T2,C,NewCarry,Res),
    slot(H1,H2,NewCarry,Carry,Digit).
""",
    "t4": """\
nn(m_swap, X,[0,1]) ::swap(X,Y,0) ; swap(X,Y,1).

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
""",
    "t6": """\
nn(m_colour,R,G,B,[red,green,blue])::colour(R,G,B,red);
\t\t\t\tcolour(R,G,B,green);colour(R,G,B,blue).

nn(m_coin,Coin,[heads,tails]) :: coin(Coin,heads);coin(Coin,tails).

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
""",
}


@pytest.mark.parametrize("name", sorted(VERBATIM_LISTINGS))
def test_verbatim_listing_parses(name):
    prog = parse_program(VERBATIM_LISTINGS[name])
    assert prog.nads, name


@pytest.mark.parametrize("name", sorted(tasks.PROGRAMS))
def test_bundled_programs_round_trip(name):
    prog = parse_program(tasks.PROGRAMS[name])
    text = program_to_text(prog)
    again = parse_program(text)
    assert prog.signature() == again.signature()
    # printing is a fixpoint after one round
    assert program_to_text(again) == text


def test_parse_dataset_examples():
    examples = parse_dataset(
        "addition(d3,d5,8) 1.0\nwin\ngame(c1,u1,u2,loss) 0.0\n"
    )
    assert examples[0].query == Atom(
        "addition", (Constant("d3"), Constant("d5"), Constant(8))
    )
    assert examples[0].target == 1.0
    assert examples[1].query == Atom("win")
    assert examples[1].target == 1.0
    assert examples[2].target == 0.0


def test_parse_dataset_rejects_nonground():
    with pytest.raises(DatasetError, match="not ground"):
        parse_dataset("addition(X,d5,8) 1.0")


def test_parse_dataset_rejects_bad_probability():
    with pytest.raises(DatasetError, match="outside"):
        parse_dataset("win 1.5")


def test_parse_vectors():
    vec = parse_vectors("img1 0.5 -1.0 2.0\nimg2 1 2 3\n")
    assert vec["img1"] == [0.5, -1.0, 2.0]
    assert len(vec["img2"]) == 3


def test_parse_query_roundtrip():
    atom = parse_query("addition(d3,d5,8)")
    assert atom == Atom("addition", (Constant("d3"), Constant("d5"), Constant(8)))
