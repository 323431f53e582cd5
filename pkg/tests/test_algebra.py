"""Lie-algebra decisions: closure, solvability, rank, Cartan data, completions."""
import numpy as np
import pytest

from liouville import (
    BinOp, Call, Const, EvalPoint, InvariantSet, Neg, Param, Pow,
    RegularElement, StructureConstants, SymplecticStructure, Var,
    algebra_rank, bracket_matrix_at, bracket_value, cartan_basis_at,
    check_closure, dual_abelian_pointwise, evaluate, find_level_point,
    fit_structure_constants, functional_independence, get_system,
    is_solvable, mishchenko_fomenko_check, poisson_bracket, probe_points,
    search_polynomial_completion, simplify,
)
from liouville.algebra import (
    AlgebraError, ConvergenceError, RegularityError, SamplingError,
    build_combination,
)
from liouville.expr import const, p, parse, q


def _rank(matrix, rcond=1e-8):
    s = np.linalg.svd(matrix, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rcond * s[0]))


def _in_span(target_vals, basis_vals, tol=1e-8):
    """Relative least-squares distance of target from span(columns)."""
    a = np.asarray(basis_vals, dtype=float).T
    b = np.asarray(target_vals, dtype=float)
    coef, *_ = np.linalg.lstsq(a, b, rcond=None)
    resid = np.linalg.norm(a @ coef - b)
    return resid <= tol * (1.0 + np.linalg.norm(b))


def test_bracket_matrix_vortex_pattern():
    system = get_system("vortices3")
    inv = system.invariants
    u = probe_points(system, 1, seed=3)[0]
    m = bracket_matrix_at(inv, u)
    vals = inv.member_values(u)
    assert np.max(np.abs(m + m.T)) <= 1e-12
    expected = np.zeros((4, 4))
    expected[0, 2] = -vals[1]        # {P1,P} = -P2
    expected[1, 2] = vals[0]         # {P2,P} = P1
    expected -= expected.T
    assert np.allclose(m, expected, atol=1e-9)


def test_bracket_matrix_abelian_is_zero():
    system = get_system("uncoupled_oscillators")
    u = probe_points(system, 1)[0]
    m = bracket_matrix_at(system.invariants, u)
    assert np.max(np.abs(m)) <= 1e-12


def test_bracket_matrix_central_field_so3_block():
    system = get_system("central_field")
    inv = system.invariants                      # members H, P1, P2, P3
    u = probe_points(system, 1, seed=8)[0]
    m = bracket_matrix_at(inv, u)
    vals = inv.member_values(u)
    assert np.max(np.abs(m[0, :])) <= 1e-10      # H row vanishes
    assert np.max(np.abs(m[:, 0])) <= 1e-10
    assert m[1, 2] == pytest.approx(vals[3], abs=1e-10)   # {P1,P2} = P3
    assert m[3, 1] == pytest.approx(vals[2], abs=1e-10)   # {P3,P1} = P2
    assert m[2, 3] == pytest.approx(vals[1], abs=1e-10)   # {P2,P3} = P1


def test_fit_vortices_balanced():
    system = get_system("vortices3")
    sc = fit_structure_constants(system.invariants, samples=60, seed=1)
    assert sc.residual < 1e-9
    assert not sc.rank_deficient
    assert np.max(np.abs(sc.c0)) == 0.0
    # {P1,P} = -P2: member order P1,P2,P,H
    assert sc.c[1, 0, 2] == pytest.approx(-1.0, abs=1e-8)
    assert sc.c[1, 2, 0] == pytest.approx(1.0, abs=1e-8)
    assert np.max(np.abs(sc.c + np.transpose(sc.c, (0, 2, 1)))) == 0.0


def test_fit_vortices_with_central_term():
    system = get_system("vortices3", {"xi": (1.0, 1.0, 1.0)})
    sc = fit_structure_constants(system.invariants, samples=60, seed=1,
                                 allow_central=True)
    assert sc.residual < 1e-9
    assert sc.c0[0, 1] == pytest.approx(-3.0, abs=1e-7)


def test_fit_central_field():
    system = get_system("central_field")
    sc = fit_structure_constants(system.invariants, samples=60, seed=2)
    assert sc.residual < 1e-9
    assert sc.c[3, 1, 2] == pytest.approx(1.0, abs=1e-8)   # {P1,P2} = P3
    assert sc.c[2, 3, 1] == pytest.approx(1.0, abs=1e-8)   # {P3,P1} = P2
    assert sc.c[1, 2, 3] == pytest.approx(1.0, abs=1e-8)   # {P2,P3} = P1


def test_fit_rejects_small_inputs():
    system = get_system("oscillator")
    with pytest.raises(ValueError):
        fit_structure_constants(system.invariants)
    pair = get_system("uncoupled_oscillators").invariants
    with pytest.raises(ValueError):
        fit_structure_constants(pair, samples=3)


def test_fit_flags_dependent_members():
    s = SymplecticStructure.canonical(1)
    h = simplify((p(1) ** 2 + q(1) ** 2) / 2)
    inv = InvariantSet(s, ("H", "H2"), (h, simplify(2 * h)))
    sc = fit_structure_constants(inv, samples=30, seed=4)
    assert sc.rank_deficient


def test_closure_verdicts():
    system = get_system("vortices3")
    sc = fit_structure_constants(system.invariants, samples=60, seed=1)
    assert check_closure(sc, tol=1e-6)

    s = SymplecticStructure.canonical(1)
    inv = InvariantSet(s, ("A", "B"), (simplify(q(1) ** 2),
                                       simplify(p(1) ** 3)))
    bad = fit_structure_constants(inv, samples=40, seed=5)
    assert not check_closure(bad, tol=1e-6)      # {A,B} = -6 q1 p1^2


def test_closure_singleton():
    # {H,H} = 0 identically, so a one-member table closes with residual 0
    sc = StructureConstants(("H",), np.zeros((1, 1, 1)), np.zeros((1, 1)),
                            residual=0.0, central_allowed=False)
    assert check_closure(sc)


def test_solvable_three_particles():
    system = get_system("three_particles")
    sc = fit_structure_constants(system.invariants, samples=60, seed=6)
    assert sc.residual < 1e-8
    assert is_solvable(sc)


def test_solvable_rejects_so3():
    system = get_system("central_field")
    inv = system.invariants
    so3 = InvariantSet(inv.structure, inv.names[1:], inv.exprs[1:])
    sc = fit_structure_constants(so3, samples=60, seed=7)
    assert sc.residual < 1e-8
    assert not is_solvable(sc)       # [so(3), so(3)] = so(3)


def test_solvable_abelian():
    sc = fit_structure_constants(get_system("uncoupled_oscillators").invariants,
                                 samples=30, seed=8)
    assert is_solvable(sc)


def test_algebra_rank_vortices():
    system = get_system("vortices3")
    probes = probe_points(system, 6, seed=9)
    r, constant = algebra_rank(system.invariants, probes)
    assert (r, constant) == (2, True)
    for u in probes:
        assert _rank(bracket_matrix_at(system.invariants, u)) == 2


def test_algebra_rank_central_field():
    system = get_system("central_field")
    r, constant = algebra_rank(system.invariants, probe_points(system, 6))
    assert (r, constant) == (2, True)


def test_algebra_rank_abelian_pair():
    system = get_system("uncoupled_oscillators")
    r, constant = algebra_rank(system.invariants, probe_points(system, 4))
    assert (r, constant) == (2, True)       # zero matrix, rank G = k


def test_algebra_rank_needs_probes():
    system = get_system("vortices3")
    with pytest.raises(ValueError):
        algebra_rank(system.invariants, probe_points(system, 2))


def test_find_level_point_oscillator():
    inv = get_system("oscillator").invariants
    element = find_level_point(inv, (0.5,), EvalPoint((1.0,), (0.1,)))
    assert element.witness is not None
    got = inv.member_values(element.witness)[0]
    assert abs(got - 0.5) <= 1e-10


def test_find_level_point_infeasible():
    inv = get_system("oscillator").invariants
    with pytest.raises(ConvergenceError):
        find_level_point(inv, (-1.0,), EvalPoint((1.0,), (0.1,)))


def test_find_level_point_vortex_self_consistency():
    system = get_system("vortices3")
    inv = system.invariants
    u = probe_points(system, 1, seed=10)[0]
    target = inv.member_values(u)
    guess = EvalPoint(tuple(v + 0.05 for v in u.q),
                      tuple(v - 0.05 for v in u.p))
    element = find_level_point(inv, target, guess)
    assert np.max(np.abs(inv.member_values(element.witness) - target)) <= 1e-10


def test_cartan_basis_central_field():
    system = get_system("central_field")
    inv = system.invariants
    u = probe_points(system, 1, seed=11)[0]
    element = find_level_point(inv, inv.member_values(u), u)
    basis = cartan_basis_at(inv, element, seed=11)
    assert basis.dimension == 2
    h = element.values
    e_h = np.array([1.0, 0.0, 0.0, 0.0])
    p_h = np.array([0.0, h[1], h[2], h[3]])
    p_h /= np.linalg.norm(p_h)
    proj = basis.vectors.T @ basis.vectors
    for target in (e_h, p_h):
        assert np.linalg.norm(target - proj @ target) <= 1e-8


def test_cartan_basis_vortices_contains_qh():
    system = get_system("vortices3")
    inv = system.invariants
    u = probe_points(system, 1, seed=12)[0]
    element = find_level_point(inv, inv.member_values(u), u)
    basis = cartan_basis_at(inv, element, seed=12)
    assert basis.dimension == 2
    h1, h2 = element.values[0], element.values[1]
    xi_sum = sum(system.structure.weights)
    q_h = np.array([-h1, -h2, xi_sum, 0.0])
    q_h /= np.linalg.norm(q_h)
    e_h = np.array([0.0, 0.0, 0.0, 1.0])
    proj = basis.vectors.T @ basis.vectors
    for target in (q_h, e_h):
        assert np.linalg.norm(target - proj @ target) <= 1e-8
    # each kernel vector annihilates the evaluated bracket matrix
    m = bracket_matrix_at(inv, element.witness)
    assert np.max(np.abs(basis.vectors @ m)) <= 1e-8


def test_cartan_basis_abelian_is_everything():
    system = get_system("uncoupled_oscillators")
    inv = system.invariants
    u = probe_points(system, 1)[0]
    element = find_level_point(inv, inv.member_values(u), u)
    basis = cartan_basis_at(inv, element)
    assert basis.dimension == inv.k


def test_cartan_basis_requires_witness():
    inv = get_system("vortices3").invariants
    with pytest.raises(RegularityError):
        cartan_basis_at(inv, RegularElement((0.0, 0.0, 1.0, 1.0)))


def test_cartan_basis_rejects_off_level_witness():
    system = get_system("vortices3")
    inv = system.invariants
    u = probe_points(system, 1, seed=13)[0]
    off = tuple(v + 1.0 for v in inv.member_values(u))
    with pytest.raises(RegularityError):
        cartan_basis_at(inv, RegularElement(off, u))


def test_cartan_basis_rejects_singular_stratum():
    # P1 = P2 = 0 zeroes the whole bracket matrix: kernel jumps to 4
    system = get_system("vortices3")
    inv = system.invariants
    u = EvalPoint((1.0, 1.0, 1.0), (1.0, -1.0, 0.0))
    element = RegularElement(tuple(inv.member_values(u)), u)
    with pytest.raises(RegularityError):
        cartan_basis_at(inv, element, seed=14)


def test_mishchenko_fomenko_fixtures():
    v3 = get_system("vortices3")
    report = mishchenko_fomenko_check(v3.invariants, probe_points(v3, 5))
    assert (report.dim_g, report.rank_g, report.dim_m) == (4, 2, 6)
    assert report.holds

    v4 = get_system("vortices", {"n": 4})
    report4 = mishchenko_fomenko_check(v4.invariants, probe_points(v4, 5))
    assert (report4.dim_g, report4.rank_g, report4.dim_m) == (4, 2, 8)
    assert not report4.holds

    cf = get_system("central_field")
    assert mishchenko_fomenko_check(cf.invariants, probe_points(cf, 5)).holds


def test_mishchenko_fomenko_scan():
    # the dimension condition picks out exactly three vortices
    for n in (2, 3, 4, 5):
        system = get_system("vortices", {"n": n})
        report = mishchenko_fomenko_check(system.invariants,
                                          probe_points(system, 5))
        assert report.holds == (n == 3)


def test_functional_independence():
    system = get_system("vortices3")
    assert functional_independence(system.invariants,
                                   probe_points(system, 6, seed=15))

    s = SymplecticStructure.canonical(1)
    h = simplify((p(1) ** 2 + q(1) ** 2) / 2)
    dep = InvariantSet(s, ("H", "H2"), (h, simplify(2 * h)))
    pts = dep.sample_points(4, seed=16)
    assert not functional_independence(dep, pts)

    coords = InvariantSet(s, ("Q", "P"), (q(1), p(1)))
    assert functional_independence(coords, coords.sample_points(4, seed=17))
    with pytest.raises(ValueError):
        functional_independence(coords, coords.sample_points(1, seed=18))


def test_completion_recovers_vortex_quadratic():
    system = get_system("vortices3")
    inv = system.invariants
    sub = InvariantSet(inv.structure, inv.names[:3], inv.exprs[:3])
    u = probe_points(system, 1, seed=19)[0]
    element = find_level_point(sub, sub.member_values(u), u)
    basis = cartan_basis_at(sub, element, seed=19)
    family = search_polynomial_completion(sub, basis, element, degree=2,
                                          seed=19)
    assert len(family) == 1
    xi_sum = sum(system.structure.weights)
    target = simplify(BinOp("-", BinOp("-",
                                       BinOp("*", Const(xi_sum), inv.exprs[2]),
                                       Pow(inv.exprs[0], 2.0)),
                            Pow(inv.exprs[1], 2.0)))
    pts = sub.sample_points(30, seed=20)
    fam_vals = [[evaluate(f, sub.bind(pt)) for pt in pts] for f in family]
    tgt_vals = [evaluate(target, sub.bind(pt)) for pt in pts]
    assert _in_span(tgt_vals, fam_vals)


def test_completion_recovers_so3_casimir():
    system = get_system("central_field")
    inv = system.invariants
    u = probe_points(system, 1, seed=21)[0]
    element = find_level_point(inv, inv.member_values(u), u)
    basis = cartan_basis_at(inv, element, seed=21)
    family = search_polynomial_completion(inv, basis, element, degree=2,
                                          seed=21)
    assert family
    casimir = simplify(BinOp("+", BinOp("+", Pow(inv.exprs[1], 2.0),
                                        Pow(inv.exprs[2], 2.0)),
                             Pow(inv.exprs[3], 2.0)))
    pts = inv.sample_points(30, seed=22)
    fam_vals = [[evaluate(f, inv.bind(pt)) for pt in pts] for f in family]
    cas_vals = [evaluate(casimir, inv.bind(pt)) for pt in pts]
    assert _in_span(cas_vals, fam_vals)
    # every returned candidate commutes with every generator
    checks = inv.sample_points(10, seed=23, need_brackets=True)
    for f in family:
        for gen in inv.exprs:
            for pt in checks:
                assert abs(bracket_value(f, gen, inv.structure,
                                         inv.bind(pt))) <= 1e-8


def test_completion_abelian_degree1_empty():
    system = get_system("uncoupled_oscillators")
    inv = system.invariants
    u = probe_points(system, 1)[0]
    element = find_level_point(inv, inv.member_values(u), u)
    basis = cartan_basis_at(inv, element)
    assert search_polynomial_completion(inv, basis, element, degree=1) == []


def test_completion_plus_cartan_is_involutive_family():
    # n commuting functions: two Cartan combinations plus the completion
    system = get_system("vortices3")
    inv = system.invariants
    u = probe_points(system, 1, seed=24)[0]
    element = find_level_point(inv, inv.member_values(u), u)
    basis = cartan_basis_at(inv, element, seed=24)
    sub = InvariantSet(inv.structure, inv.names[:3], inv.exprs[:3])
    sub_element = find_level_point(sub, sub.member_values(u), u)
    sub_basis = cartan_basis_at(sub, sub_element, seed=24)
    family = search_polynomial_completion(sub, sub_basis, sub_element,
                                          degree=2, seed=24)
    funcs = basis.combination_exprs(inv) + family
    assert len(funcs) == system.structure.n
    pts = inv.sample_points(20, seed=25, need_brackets=True)
    for i in range(len(funcs)):
        for j in range(i + 1, len(funcs)):
            for pt in pts:
                assert abs(bracket_value(funcs[i], funcs[j], inv.structure,
                                         inv.bind(pt))) <= 1e-8


def test_fitted_constants_satisfy_jacobi():
    for name, seed in (("vortices3", 26), ("central_field", 27)):
        inv = get_system(name).invariants
        sc = fit_structure_constants(inv, samples=60, seed=seed)
        assert sc.jacobi_defect() <= 1e-8


def test_lie_cartan_dimension_consistency():
    # kernel dimension k - 2(n - r) whenever the dimension condition holds
    for name in ("vortices3", "central_field"):
        system = get_system(name)
        inv = system.invariants
        u = probe_points(system, 1, seed=28)[0]
        element = find_level_point(inv, inv.member_values(u), u)
        basis = cartan_basis_at(inv, element, seed=28)
        report = mishchenko_fomenko_check(inv, probe_points(system, 5))
        assert report.holds
        n = system.structure.n
        assert basis.dimension == inv.k - 2 * (n - report.rank_g)
        # pairwise brackets of the Cartan combinations vanish at the witness
        m = bracket_matrix_at(inv, element.witness)
        cross = basis.vectors @ m @ basis.vectors.T
        assert np.max(np.abs(cross)) <= 1e-8


def test_dual_abelian_single_direction():
    for name, seed in (("vortices3", 29), ("central_field", 30)):
        system = get_system(name)
        inv = system.invariants
        u = probe_points(system, 1, seed=seed)[0]
        element = find_level_point(inv, inv.member_values(u), u)
        frame = dual_abelian_pointwise(inv, cartan_basis_at(inv, element,
                                                            seed=seed),
                                       element)
        assert frame.vectors.shape[0] == 1
        assert frame.max_cross_bracket <= 1e-8


def _shift_indices(e, offset):
    if isinstance(e, Var):
        kind, idx = e.name[0], int(e.name[1:])
        return Var(f"{kind}{idx + offset}")
    if isinstance(e, (Const, Param)):
        return e
    if isinstance(e, Neg):
        return Neg(_shift_indices(e.arg, offset))
    if isinstance(e, Call):
        return Call(e.func, _shift_indices(e.arg, offset))
    if isinstance(e, Pow):
        return Pow(_shift_indices(e.base, offset), e.exponent)
    return BinOp(e.op, _shift_indices(e.left, offset),
                 _shift_indices(e.right, offset))


def test_dual_abelian_product_system():
    # two independent vortex triples: n = 6, k = 8, rank G = 4, so two
    # commuting directions over the complement
    base = get_system("vortices3")
    xi = base.structure.weights
    s = SymplecticStructure(6, xi + xi)
    names = tuple(f"{nm}a" for nm in base.invariants.names) + \
        tuple(f"{nm}b" for nm in base.invariants.names)
    exprs = tuple(base.invariants.exprs) + \
        tuple(_shift_indices(e, 3) for e in base.invariants.exprs)
    inv = InvariantSet(s, names, exprs)
    u = inv.sample_points(1, seed=31, need_brackets=True)[0]
    element = find_level_point(inv, inv.member_values(u), u)
    basis = cartan_basis_at(inv, element, seed=31)
    assert basis.dimension == 4
    frame = dual_abelian_pointwise(inv, basis, element)
    assert frame.vectors.shape[0] == 2
    assert frame.max_cross_bracket <= 1e-8
    # brute force: all pairwise bracket values of the combinations
    combos = frame.combination_exprs(inv)
    witness = inv.bind(element.witness)
    for i in range(len(combos)):
        for j in range(len(combos)):
            assert abs(bracket_value(combos[i], combos[j], s,
                                     witness)) <= 1e-8


def test_invariant_set_validation():
    s = SymplecticStructure.canonical(1)
    with pytest.raises(ValueError):
        InvariantSet(s, ("A", "B"), (q(1),))
    with pytest.raises(ValueError):
        InvariantSet(s, ("A", "A"), (q(1), p(1)))
    with pytest.raises(ValueError):
        InvariantSet(s, ("A",), (q(2),))
    with pytest.raises(ValueError):
        InvariantSet(s, ("A",), (parse("g*q1", 1),))
    bound = InvariantSet(s, ("A",), (parse("g*q1", 1),), params={"g": 2.0})
    assert bound.member_values(EvalPoint((3.0,), (0.0,)))[0] == 6.0


def test_sampling_error_on_unreachable_domain():
    s = SymplecticStructure.canonical(1)
    inv = InvariantSet(s, ("F",), (parse("ln(q1 - 5)", 1),))
    with pytest.raises(SamplingError):
        inv.sample_points(5, seed=32)


def test_build_combination():
    inv = get_system("vortices3").invariants
    e = build_combination(inv, (1.0, 0.0, -2.0, 0.0))
    u = inv.sample_points(1, seed=33)[0]
    vals = inv.member_values(u)
    assert evaluate(e, inv.bind(u)) == pytest.approx(vals[0] - 2 * vals[2])
    with pytest.raises(ValueError):
        build_combination(inv, (1.0, 2.0))


def test_algebra_error_hierarchy():
    assert issubclass(ConvergenceError, AlgebraError)
    assert issubclass(RegularityError, AlgebraError)
    assert issubclass(SamplingError, AlgebraError)
