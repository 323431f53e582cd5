"""Expression layer: parsing, differentiation, evaluation, simplification."""
import math

import numpy as np
import pytest

from liouville import (
    BinOp, Call, Const, DomainError, EvalPoint, IndeterminateError, Neg,
    Param, ParseError, Pow, UnboundSymbolError, Var, compile_functions,
    differentiate, dimension_of, evaluate, get_system,
    numerically_equivalent, parameters_of, parse, sample_eval_points,
    simplify, substitute_param, to_string,
)
from liouville.expr import const, p, q


def test_parse_sum_of_products():
    e = parse("q1*p1 + q2*p2", 2)
    assert isinstance(e, BinOp) and e.op == "+"
    assert isinstance(e.left, BinOp) and e.left.op == "*"
    assert isinstance(e.right, BinOp) and e.right.op == "*"
    assert e.left.left == Var("q1") and e.right.right == Var("p2")


def test_parse_with_parameter():
    e = parse("p1^2/2 + p2^2/2 + g/((q1-q2)^2)", 2)
    assert parameters_of(e) == {"g"}
    u = EvalPoint((1.0, 3.0), (2.0, 4.0), {"g": 8.0})
    assert evaluate(e, u) == pytest.approx(2.0 + 8.0 + 8.0 / 4.0)


def test_parse_index_out_of_range():
    with pytest.raises(ParseError, match="q3"):
        parse("ln(q3)", 2)


def test_parse_syntax_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse("q1 + * p1", 1)
    assert err.value.position == 5
    assert "column 6" in str(err.value)


def test_parse_unknown_function():
    with pytest.raises(ParseError, match="unknown function"):
        parse("foo(q1)", 1)
    # reserved names cannot be used as bare parameters either
    with pytest.raises(ParseError):
        parse("ln + 1", 1)


def test_parse_trailing_garbage():
    with pytest.raises(ParseError, match="trailing"):
        parse("q1 q2", 2)


def test_parse_unary_minus_and_exponents():
    assert evaluate(parse("-q1^2", 1), EvalPoint((3.0,), (0.0,))) == -9.0
    assert evaluate(parse("q1^(-2)", 1), EvalPoint((2.0,), (0.0,))) == 0.25
    assert evaluate(parse("2^-2", 0), EvalPoint((), ())) == 0.25
    with pytest.raises(ParseError):
        parse("q1^p1", 1)        # exponents are numeric literals only


def test_power_rule():
    d = simplify(differentiate(parse("q1^2", 1), "q1"))
    assert to_string(d) == "2*q1"


def test_derivative_matches_fd_on_log():
    e = parse("ln((q1-q2)^2 + (p1-p2)^2)", 2)
    d = differentiate(e, "q1")
    u = sample_eval_points(2, 1, seed=3)[0]
    step = 1e-5
    up = EvalPoint((u.q[0] + step, u.q[1]), u.p)
    dn = EvalPoint((u.q[0] - step, u.q[1]), u.p)
    fd = (evaluate(e, up) - evaluate(e, dn)) / (2 * step)
    sym = evaluate(d, u)
    assert abs(sym - fd) <= 1e-6 * (1 + abs(sym))


def test_derivative_of_unrelated_variable():
    assert simplify(differentiate(p(2), "q1")) == Const(0.0)


def test_evaluate_product():
    assert evaluate(parse("q1*p1", 1), EvalPoint((2.0,), (3.0,))) == 6.0


def test_evaluate_ln_negative():
    with pytest.raises(DomainError):
        evaluate(parse("ln(q1)", 1), EvalPoint((-1.0,), (0.0,)))


def test_evaluate_vortex_collision():
    # coincident vortices put a zero inside the log
    system = get_system("vortices3")
    u = EvalPoint((1.0, 1.0, 0.5), (0.2, 0.2, -0.4))
    with pytest.raises(DomainError):
        evaluate(system.hamiltonian, u)


def test_evaluate_division_by_zero():
    with pytest.raises(DomainError):
        evaluate(parse("1/(q1-q1)", 1), EvalPoint((1.0,), (0.0,)))


def test_evaluate_power_domain():
    u = EvalPoint((0.0,), (-2.0,))
    with pytest.raises(DomainError):
        evaluate(parse("q1^(-1)", 1), u)
    with pytest.raises(DomainError):
        evaluate(parse("p1^0.5", 1), u)


def test_evaluate_unbound_parameter():
    with pytest.raises(UnboundSymbolError):
        evaluate(parse("g*q1", 1), EvalPoint((1.0,), (0.0,)))


def test_simplify_zero_product():
    assert simplify(parse("0*q1 + p1", 1)) == Var("p1")


def test_simplify_cancellation():
    assert simplify(parse("q1 - q1", 1)) == Const(0.0)


def test_simplify_constant_folding():
    assert to_string(simplify(parse("2*(q1*3)", 1))) == "6*q1"


def test_numeric_equivalence_of_expansion():
    a = parse("(q1+p1)^2", 1)
    b = parse("q1^2 + 2*q1*p1 + p1^2", 1)
    assert numerically_equivalent(a, b)


def test_numeric_equivalence_rejects_distinct():
    assert not numerically_equivalent(q(1), p(1))


def test_numeric_equivalence_dilation_momentum_bracket():
    # {H2, H3} for the particles-on-a-line fixture equals -H3
    from liouville import poisson_bracket
    system = get_system("three_particles")
    inv = system.invariants
    h2 = inv.exprs[list(inv.names).index("H2")]
    h3 = inv.exprs[list(inv.names).index("H3")]
    br = poisson_bracket(h2, h3, system.structure)
    assert numerically_equivalent(br, simplify(Neg(h3)))


def test_numeric_equivalence_indeterminate():
    bad = parse("ln(-1 - q1^2)", 1)
    with pytest.raises(IndeterminateError):
        numerically_equivalent(bad, bad)


def _random_expr(rng, n=2):
    """Small random tree over q1..qn, p1..pn, smooth on the sample band."""
    atoms = [q(i) for i in range(1, n + 1)] + [p(i) for i in range(1, n + 1)]

    def atom():
        roll = rng.integers(0, 6)
        if roll == 0:
            return const(float(rng.integers(-3, 4)) or 1.0)
        return atoms[rng.integers(0, len(atoms))]

    def node(depth):
        if depth == 0:
            return atom()
        roll = rng.integers(0, 8)
        if roll < 3:
            return BinOp("+-*"[rng.integers(0, 3)],
                         node(depth - 1), node(depth - 1))
        if roll == 3:
            return BinOp("/", node(depth - 1),
                         const(2.0) + node(depth - 1) ** 2)
        if roll == 4:
            return Pow(node(depth - 1), float(rng.integers(1, 4)))
        if roll == 5:
            inner = node(depth - 1)
            # the parser folds "-literal" into a constant; keep trees foldless
            return inner if isinstance(inner, Const) else Neg(inner)
        if roll == 6:
            return Call("sin", node(depth - 1))
        return Call("exp", const(0.25) * node(depth - 1))

    return node(2)


def test_property_derivative_vs_finite_difference():
    rng = np.random.default_rng(404)
    symbols = ["q1", "q2", "p1", "p2"]
    checked = 0
    while checked < 100:
        e = _random_expr(rng)
        s = symbols[rng.integers(0, 4)]
        d = differentiate(e, s)
        u = sample_eval_points(2, 1, seed=int(rng.integers(0, 10**6)))[0]
        coords = {"q1": 0, "q2": 1, "p1": 2, "p2": 3}
        flat = list(u.q) + list(u.p)
        step = 1e-6 * (1 + abs(flat[coords[s]]))
        lo, hi = list(flat), list(flat)
        lo[coords[s]] -= step
        hi[coords[s]] += step
        try:
            sym = evaluate(d, u)
            f_hi = evaluate(e, EvalPoint(tuple(hi[:2]), tuple(hi[2:])))
            f_lo = evaluate(e, EvalPoint(tuple(lo[:2]), tuple(lo[2:])))
        except DomainError:
            continue
        fd = (f_hi - f_lo) / (2 * step)
        assert abs(sym - fd) <= 1e-5 * (1 + abs(sym))
        checked += 1


def test_property_simplify_preserves_evaluate():
    rng = np.random.default_rng(405)
    for _ in range(60):
        e = _random_expr(rng)
        s = simplify(e)
        for u in sample_eval_points(2, 5, seed=int(rng.integers(0, 10**6))):
            try:
                v = evaluate(e, u)
            except DomainError:
                continue
            assert evaluate(s, u) == pytest.approx(v, rel=1e-12, abs=1e-12)


def test_property_print_parse_roundtrip():
    rng = np.random.default_rng(406)
    for _ in range(80):
        e = _random_expr(rng)
        if isinstance(e, Const):
            continue
        assert parse(to_string(e), 2) == e


def test_print_parse_roundtrip_fixed_forms():
    for text in ("q1*p1+q2*p2", "p1^2/2+g/((q1-q2)^2)", "-(q1+p1)^3",
                 "ln((q1-q2)^2+(p1-p2)^2)", "q1^(-2)+sqrt(q2^2+1)"):
        e = parse(text, 2)
        assert parse(to_string(e), 2) == e


def test_compile_functions_matches_evaluate():
    rng = np.random.default_rng(407)
    exprs = [_random_expr(rng) for _ in range(6)]
    fn = compile_functions(exprs, 2)
    for u in sample_eval_points(2, 10, seed=9):
        y = list(u.q) + list(u.p)
        try:
            want = [evaluate(e, u) for e in exprs]
        except DomainError:
            continue
        got = fn(y)
        assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_compile_functions_unbound_parameter():
    with pytest.raises(UnboundSymbolError):
        compile_functions([parse("g*q1", 1)], 1)


def test_compile_functions_domain_error():
    fn = compile_functions([parse("ln(q1)", 1)], 1)
    with pytest.raises(DomainError):
        fn([-1.0, 0.0])


def test_substitute_param():
    pot = parse("r2/2 + ln(r2)", 0)
    r2 = parse("q1^2 + q2^2", 2)
    e = substitute_param(pot, "r2", r2)
    assert parameters_of(e) == set()
    u = EvalPoint((1.0, 2.0), (0.0, 0.0))
    assert evaluate(e, u) == pytest.approx(2.5 + math.log(5.0))


def test_dimension_of():
    assert dimension_of(parse("q1*p3", 3)) == 3
    assert dimension_of(const(5.0)) == 0
    assert dimension_of(q(2), p(4)) == 4


def test_sample_points_band_and_determinism():
    pts = sample_eval_points(3, 25, seed=11)
    again = sample_eval_points(3, 25, seed=11)
    for u, v in zip(pts, again):
        assert u.q == v.q and u.p == v.p
        for value in u.q + u.p:
            assert 0.5 <= abs(value) <= 2.0


def test_eval_point_state():
    u = EvalPoint((1.0, 2.0), (3.0, 4.0))
    assert u.n == 2
    assert tuple(u.state()) == (1.0, 2.0, 3.0, 4.0)
