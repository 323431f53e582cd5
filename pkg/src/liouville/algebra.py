"""Lie-algebra analysis of finite invariant sets.

Given an ordered set of invariants H_1..H_k on a weighted phase space, this
module fits structure constants {H_i, H_j} = c0_ij + sum_s c^s_ij H_s from
seeded samples, decides closure and solvability, measures the algebra rank
r = k - rank ||{H_i,H_j}(u)||, extracts Cartan (kernel) directions at a
regular level, checks the dimension condition k + r = 2n, searches for
polynomial completions that commute with every generator, and builds the
pointwise dual abelian frame from the skew eigen-structure of the complement
bracket matrix.

Numeric rank decisions use the shared threshold: singular values above
1e-8 times the largest one count toward the rank.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .expr import (
    BinOp, Const, DomainError, EvalPoint, Expr, Pow, dimension_of, evaluate,
    parameters_of, sample_eval_points, simplify, to_string,
)
from .symplectic import SymplecticStructure, poisson_bracket

__all__ = [
    "AlgebraError", "ConvergenceError", "RegularityError", "SamplingError",
    "InvariantSet", "StructureConstants", "RegularElement", "CartanBasis",
    "MishchenkoFomenkoReport", "DualAbelianFrame",
    "bracket_matrix_at", "fit_structure_constants", "check_closure",
    "is_solvable", "algebra_rank", "cartan_basis_at",
    "mishchenko_fomenko_check", "functional_independence", "find_level_point",
    "search_polynomial_completion", "dual_abelian_pointwise",
    "build_combination",
]

RANK_RCOND = 1e-8


class AlgebraError(Exception):
    """Base class for algebra-analysis failures."""


class ConvergenceError(AlgebraError):
    pass


class RegularityError(AlgebraError):
    pass


class SamplingError(AlgebraError):
    pass


@dataclass
class InvariantSet:
    """Ordered named invariants sharing one symplectic structure.

    ``params`` holds fixed bindings for any named parameters appearing in
    the member expressions; sampled probe points inherit them.
    """

    structure: SymplecticStructure
    names: tuple[str, ...]
    exprs: tuple[Expr, ...]
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.names = tuple(self.names)
        self.exprs = tuple(self.exprs)
        if len(self.names) != len(self.exprs):
            raise ValueError("names and expressions must pair up")
        if len(self.names) != len(set(self.names)):
            raise ValueError("member names must be unique")
        if not self.names:
            raise ValueError("an invariant set needs at least one member")
        for name, e in zip(self.names, self.exprs):
            d = dimension_of(e)
            if d > self.structure.n:
                raise ValueError(
                    f"member {name!r} uses index {d}, beyond dimension {self.structure.n}")
        unbound = set()
        for e in self.exprs:
            unbound |= parameters_of(e)
        unbound -= set(self.params)
        if unbound:
            raise ValueError(f"members use unbound parameters: {sorted(unbound)}")
        self._bracket_cache: dict[tuple[int, int], Expr] = {}
        self._grad_cache: dict[int, tuple[Expr, ...]] = {}

    @property
    def k(self) -> int:
        return len(self.names)

    def bind(self, point: EvalPoint) -> EvalPoint:
        merged = dict(self.params)
        merged.update(point.params)
        return EvalPoint(point.q, point.p, merged)

    def bracket_expr(self, i: int, j: int) -> Expr:
        """Cached simplified expression for {H_i, H_j} (0-based indices)."""
        key = (i, j)
        if key not in self._bracket_cache:
            self._bracket_cache[key] = poisson_bracket(
                self.exprs[i], self.exprs[j], self.structure)
        return self._bracket_cache[key]

    def gradient_exprs(self, i: int) -> tuple[Expr, ...]:
        if i not in self._grad_cache:
            from .expr import differentiate
            names = [f"q{j}" for j in range(1, self.structure.n + 1)] + \
                    [f"p{j}" for j in range(1, self.structure.n + 1)]
            self._grad_cache[i] = tuple(differentiate(self.exprs[i], s) for s in names)
        return self._grad_cache[i]

    def member_values(self, point: EvalPoint) -> np.ndarray:
        u = self.bind(point)
        return np.array([evaluate(e, u) for e in self.exprs])

    def jacobian_at(self, point: EvalPoint) -> np.ndarray:
        u = self.bind(point)
        rows = []
        for i in range(self.k):
            rows.append([evaluate(g, u) for g in self.gradient_exprs(i)])
        return np.array(rows)

    def sample_points(self, count: int, seed: int,
                      need_brackets: bool = False) -> list[EvalPoint]:
        """Seeded points where every member (and optionally every bracket)
        evaluates; resamples domain failures up to a 10x oversampling cap."""
        good: list[EvalPoint] = []
        drawn = 0
        batch_seed = seed
        while len(good) < count:
            if drawn >= 10 * count:
                raise SamplingError(
                    f"could not find {count} sample points clear of domain errors")
            batch = sample_eval_points(self.structure.n, count, batch_seed,
                                       params=self.params)
            batch_seed += 1
            for u in batch:
                drawn += 1
                try:
                    self.member_values(u)
                    if need_brackets:
                        bracket_matrix_at(self, u)
                except DomainError:
                    continue
                good.append(u)
                if len(good) == count:
                    break
        return good


@dataclass(frozen=True)
class RegularElement:
    """Level values h_1..h_k with an optional on-level witness point."""

    values: tuple[float, ...]
    witness: EvalPoint | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass
class StructureConstants:
    """Fitted bracket table {H_i,H_j} = c0[i,j] + sum_s c[s,i,j] H_s."""

    names: tuple[str, ...]
    c: np.ndarray           # shape (k, k, k), indexed [s, i, j]
    c0: np.ndarray          # shape (k, k)
    residual: float
    central_allowed: bool
    rank_deficient: bool = False

    @property
    def k(self) -> int:
        return len(self.names)

    def jacobi_defect(self) -> float:
        """Max absolute defect of the Jacobi identity in the abstract algebra."""
        c, c0 = self.c, self.c0
        t1 = np.einsum("mij,smk->sijk", c, c)
        t2 = np.einsum("mjk,smi->sijk", c, c)
        t3 = np.einsum("mki,smj->sijk", c, c)
        defect = float(np.max(np.abs(t1 + t2 + t3)))
        z1 = np.einsum("mij,mk->ijk", c, c0)
        z2 = np.einsum("mjk,mi->ijk", c, c0)
        z3 = np.einsum("mki,mj->ijk", c, c0)
        return max(defect, float(np.max(np.abs(z1 + z2 + z3))))


@dataclass
class CartanBasis:
    """Orthonormal coefficient vectors spanning the bracket-matrix kernel."""

    names: tuple[str, ...]
    vectors: np.ndarray     # shape (dim, k), orthonormal rows
    element: RegularElement

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[0])

    def combination_exprs(self, inv: InvariantSet) -> list[Expr]:
        return [build_combination(inv, row) for row in self.vectors]


@dataclass(frozen=True)
class MishchenkoFomenkoReport:
    dim_g: int
    rank_g: int
    dim_m: int
    holds: bool


@dataclass
class DualAbelianFrame:
    """Pointwise commuting combinations over the Cartan complement.

    ``vectors`` are coefficient rows over the complement basis; the matching
    rows of ``combinations`` express the same functions over the original
    members.  All pairwise bracket values at the witness are below
    ``max_cross_bracket``.
    """

    names: tuple[str, ...]
    complement: np.ndarray      # (2m, k) orthonormal rows
    vectors: np.ndarray         # (m, 2m) rows over the complement
    combinations: np.ndarray    # (m, k) rows over the members
    element: RegularElement
    max_cross_bracket: float

    def combination_exprs(self, inv: InvariantSet) -> list[Expr]:
        return [build_combination(inv, row) for row in self.combinations]


def build_combination(inv: InvariantSet, coeffs: Sequence[float]) -> Expr:
    """Expression for sum_i coeffs[i] * H_i, dropping negligible terms."""
    if len(coeffs) != inv.k:
        raise ValueError("coefficient count must match the member count")
    total: Expr | None = None
    scale = max((abs(float(c)) for c in coeffs), default=0.0)
    for c, e in zip(coeffs, inv.exprs):
        c = float(c)
        if scale > 0 and abs(c) <= 1e-14 * scale:
            continue
        term = BinOp("*", Const(c), e)
        total = term if total is None else BinOp("+", total, term)
    return simplify(total) if total is not None else Const(0.0)


def _numeric_rank(matrix: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
    """(rank, singular values, right singular vectors as rows)."""
    if matrix.size == 0:
        return 0, np.zeros(0), np.zeros((0, matrix.shape[1] if matrix.ndim == 2 else 0))
    u, s, vt = np.linalg.svd(matrix, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        return 0, s, vt
    rank = int(np.sum(s > RANK_RCOND * s[0]))
    return rank, s, vt


def bracket_matrix_at(inv: InvariantSet, point: EvalPoint) -> np.ndarray:
    """M[i,j] = {H_i, H_j}(point); every entry evaluated independently."""
    u = inv.bind(point)
    k = inv.k
    m = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            m[i, j] = evaluate(inv.bracket_expr(i, j), u)
    return m


def fit_structure_constants(inv: InvariantSet, samples: int = 60, seed: int = 0,
                            allow_central: bool = False) -> StructureConstants:
    """Least-squares fit of the bracket table over seeded sample points.

    Each pair {H_i, H_j} (i < j) is regressed on [1,] H_1..H_k; the constant
    column is present only when ``allow_central`` is set.  The residual is
    the worst relative misfit max |lhs - fit| / (1 + |lhs|) over pairs and
    points.  Antisymmetry of the returned tables holds by construction.
    """
    k = inv.k
    if k < 2:
        raise ValueError("need at least two members to fit structure constants")
    if samples < k + 2:
        raise ValueError("need more samples than regression columns")
    points = inv.sample_points(samples, seed, need_brackets=True)
    values = np.array([inv.member_values(u) for u in points])   # (m, k)
    if allow_central:
        design = np.hstack([np.ones((len(points), 1)), values])
    else:
        design = values
    rank, _, _ = _numeric_rank(design)
    rank_deficient = rank < design.shape[1]

    c = np.zeros((k, k, k))
    c0 = np.zeros((k, k))
    residual = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            expr = inv.bracket_expr(i, j)
            b = np.array([evaluate(expr, inv.bind(u)) for u in points])
            coef, *_ = np.linalg.lstsq(design, b, rcond=None)
            misfit = design @ coef - b
            rel = np.max(np.abs(misfit) / (1.0 + np.abs(b)))
            residual = max(residual, float(rel))
            if allow_central:
                c0[i, j] = coef[0]
                c0[j, i] = -coef[0]
                body = coef[1:]
            else:
                body = coef
            c[:, i, j] = body
            c[:, j, i] = -body
    return StructureConstants(inv.names, c, c0, residual, allow_central,
                              rank_deficient)


def check_closure(constants: StructureConstants, tol: float = 1e-6) -> bool:
    """True iff the fit residual is below tol and any central terms are legal."""
    if not constants.central_allowed and float(np.max(np.abs(constants.c0))) > 0.0:
        return False
    return constants.residual <= tol


def is_solvable(constants: StructureConstants, tol: float = 1e-6) -> bool:
    """Derived series of the abstract algebra (central terms ignored).

    Solvable iff repeatedly replacing the algebra by the span of its
    brackets terminates in the zero subspace.
    """
    c = constants.c
    k = constants.k
    basis = np.eye(k)
    for _ in range(k + 1):
        if basis.shape[0] == 0:
            return True
        brackets = np.einsum("ai,bj,sij->abs", basis, basis, c).reshape(-1, k)
        norms = np.linalg.norm(brackets, axis=1)
        brackets = brackets[norms > 1e-14]
        if brackets.shape[0] == 0:
            return True
        _, s, vt = np.linalg.svd(brackets, full_matrices=False)
        dim = int(np.sum(s > tol * s[0])) if s[0] > 0 else 0
        new_basis = vt[:dim]
        if dim >= basis.shape[0]:
            return False
        basis = new_basis
    return False


def algebra_rank(inv: InvariantSet, probes: Sequence[EvalPoint]
                 ) -> tuple[int, bool]:
    """(rank of G, constant-rank flag) from bracket matrices at the probes.

    rank G = k - max over probes of the numeric rank of ||{H_i,H_j}(u)||.
    """
    if len(probes) < 3:
        raise ValueError("need at least three probe points")
    ranks = []
    for u in probes:
        try:
            m = bracket_matrix_at(inv, u)
        except DomainError:
            continue
        rank, _, _ = _numeric_rank(m)
        ranks.append(rank)
    if not ranks:
        raise SamplingError("every probe hit a domain error (singular locus)")
    return inv.k - max(ranks), len(set(ranks)) == 1


def find_level_point(inv: InvariantSet, values: Sequence[float],
                     guess: EvalPoint, tol: float = 1e-10,
                     max_iter: int = 200) -> RegularElement:
    """Damped Gauss-Newton on sum_j (H_j(u) - h_j)^2 from the given guess.

    Convergence means the root-sum-square of the component misfits drops to
    ``tol`` or below; the resulting point becomes the witness of the
    returned :class:`RegularElement`.
    """
    target = np.array([float(v) for v in values])
    if len(target) != inv.k:
        raise ValueError("need one target value per member")
    u = inv.bind(guess)
    state = np.array(u.q + u.p, dtype=float)
    n = inv.structure.n

    def residual_at(y: np.ndarray) -> np.ndarray:
        pt = EvalPoint(tuple(y[:n]), tuple(y[n:]), u.params)
        return inv.member_values(pt) - target

    try:
        r = residual_at(state)
    except DomainError as exc:
        raise ConvergenceError(f"guess point is outside the domain: {exc}") from None
    best = float(np.linalg.norm(r))
    for _ in range(max_iter):
        if best <= tol:
            break
        pt = EvalPoint(tuple(state[:n]), tuple(state[n:]), u.params)
        jac = inv.jacobian_at(pt)
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        alpha = 1.0
        improved = False
        while alpha >= 1e-6:
            trial = state + alpha * step
            try:
                r_trial = residual_at(trial)
            except DomainError:
                alpha *= 0.5
                continue
            norm_trial = float(np.linalg.norm(r_trial))
            if norm_trial < best:
                state, r, best = trial, r_trial, norm_trial
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
    if best > tol:
        raise ConvergenceError(
            f"no convergence to the level set; best residual {best:.3e}")
    witness = EvalPoint(tuple(state[:n]), tuple(state[n:]), u.params)
    return RegularElement(tuple(target), witness)


def _generic_matrix_rank(inv: InvariantSet, probes: Sequence[EvalPoint] | None,
                         seed: int) -> int:
    if probes is None:
        probes = inv.sample_points(5, seed, need_brackets=True)
    best = 0
    for u in probes:
        try:
            m = bracket_matrix_at(inv, u)
        except DomainError:
            continue
        rank, _, _ = _numeric_rank(m)
        best = max(best, rank)
    return best


def cartan_basis_at(inv: InvariantSet, element: RegularElement,
                    probes: Sequence[EvalPoint] | None = None,
                    seed: int = 0) -> CartanBasis:
    """Orthonormal kernel of the bracket matrix at the element's witness.

    The element is regular when the kernel dimension at the witness matches
    the generic (minimal) kernel dimension seen over probe points; a larger
    kernel means the witness sits on a singular stratum.
    """
    if element.witness is None:
        raise RegularityError("regular element has no witness point")
    witness = inv.bind(element.witness)
    level = inv.member_values(witness)
    err = float(np.max(np.abs(level - np.array(element.values))))
    if err > 1e-8:
        raise RegularityError(
            f"witness misses the level values by {err:.3e}")
    m = bracket_matrix_at(inv, witness)
    rank, _, vt = _numeric_rank(m)
    kernel = vt[rank:]
    generic_rank = _generic_matrix_rank(inv, probes, seed)
    if rank != generic_rank:
        raise RegularityError(
            f"bracket-matrix rank {rank} at the witness differs from the "
            f"generic rank {generic_rank}; the element is not regular")
    return CartanBasis(inv.names, kernel, element)


def mishchenko_fomenko_check(inv: InvariantSet, probes: Sequence[EvalPoint]
                             ) -> MishchenkoFomenkoReport:
    """Dimension condition dim G + rank G = dim M for the invariant set."""
    r, _ = algebra_rank(inv, probes)
    dim_m = 2 * inv.structure.n
    return MishchenkoFomenkoReport(inv.k, r, dim_m, inv.k + r == dim_m)


def functional_independence(inv: InvariantSet, probes: Sequence[EvalPoint]
                            ) -> bool:
    """True iff the member Jacobian has full rank k at every usable probe."""
    if len(probes) < inv.k:
        raise ValueError("need at least k probe points")
    usable = 0
    for u in probes:
        try:
            jac = inv.jacobian_at(u)
        except DomainError:
            continue
        usable += 1
        rank, _, _ = _numeric_rank(jac)
        if rank < inv.k:
            return False
    if usable < inv.k:
        raise SamplingError("too few probes evaluate cleanly")
    return True


# ---------------------------------------------------------------------------
# polynomial completion


def _monomial_indices(k: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent multi-indices with 1 <= total degree <= degree, ordered."""
    out: list[tuple[int, ...]] = []
    for total in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(k), total):
            alpha = [0] * k
            for i in combo:
                alpha[i] += 1
            out.append(tuple(alpha))
    return out


def _monomial_values(values: np.ndarray, monomials: Sequence[tuple[int, ...]]
                     ) -> np.ndarray:
    cols = []
    for alpha in monomials:
        col = np.ones(values.shape[0])
        for i, a in enumerate(alpha):
            if a:
                col = col * values[:, i] ** a
        cols.append(col)
    return np.array(cols).T


def _monomial_gradients(values: np.ndarray, monomials: Sequence[tuple[int, ...]]
                        ) -> np.ndarray:
    """d m_alpha / d H_i at each sample; shape (m, n_monomials, k)."""
    m, k = values.shape
    out = np.zeros((m, len(monomials), k))
    for a_idx, alpha in enumerate(monomials):
        for i, a in enumerate(alpha):
            if not a:
                continue
            col = np.full(m, float(a))
            for j, b in enumerate(alpha):
                power = b - 1 if j == i else b
                if power:
                    col = col * values[:, j] ** power
            out[:, a_idx, i] = col
    return out


def _monomial_expr(inv: InvariantSet, alpha: tuple[int, ...]) -> Expr:
    factors: Expr | None = None
    for i, a in enumerate(alpha):
        if not a:
            continue
        f = inv.exprs[i] if a == 1 else Pow(inv.exprs[i], float(a))
        factors = f if factors is None else BinOp("*", factors, f)
    assert factors is not None
    return factors


def search_polynomial_completion(inv: InvariantSet, cartan: CartanBasis,
                                 element: RegularElement, degree: int = 2,
                                 seed: int = 0, samples: int | None = None
                                 ) -> list[Expr]:
    """Polynomials in H_1..H_k that bracket-commute with every generator.

    Builds the ansatz space of monomials of total degree <= degree, imposes
    vanishing brackets with each generator (hence with every Cartan
    combination, and pairwise among solutions by the Leibniz chain rule) at
    seeded sample points, and solves the homogeneous system.  Constants and
    the span of Cartan combinations are excluded from the returned basis;
    each survivor is re-verified to bracket-commute (with the Cartan
    combinations and pairwise) to 1e-8 at fresh points.
    """
    if degree < 1:
        raise ValueError("degree must be at least 1")
    k = inv.k
    monomials = _monomial_indices(k, degree)
    n_mono = len(monomials)
    count = samples if samples is not None else max(40, 4 * n_mono)
    points = inv.sample_points(count, seed, need_brackets=True)
    values = np.array([inv.member_values(u) for u in points])
    grads = _monomial_gradients(values, monomials)       # (m, n_mono, k)
    brackets = np.array([bracket_matrix_at(inv, u) for u in points])

    # {m_alpha, H_j}(u) = sum_i dm_alpha/dH_i(u) * {H_i, H_j}(u)  (chain rule)
    rows = np.einsum("mai,mij->mja", grads, brackets).reshape(-1, n_mono)
    scale = np.max(np.abs(rows), axis=0)
    # columns at rounding-noise level belong to monomials that already
    # commute identically; snap them to zero instead of amplifying noise
    dead = scale <= 1e-12 * max(1.0, float(np.max(scale, initial=0.0)))
    rows[:, dead] = 0.0
    scale[dead] = 1.0
    rank, _, vt = _numeric_rank(rows / scale)
    kernel = vt[rank:] / scale                            # unscaled coefficients
    if kernel.shape[0] == 0:
        return []

    # excluded directions: degree-1 embeddings of the Cartan combinations
    deg1 = [a for a, alpha in enumerate(monomials) if sum(alpha) == 1]
    excluded = np.zeros((cartan.dimension, n_mono))
    for row, vec in enumerate(cartan.vectors):
        for a in deg1:
            i = monomials[a].index(1)
            excluded[row, a] = vec[i]
    if excluded.size:
        ex_rank, _, ex_vt = _numeric_rank(excluded)
        basis_ex = ex_vt[:ex_rank]
        kernel = kernel - (kernel @ basis_ex.T) @ basis_ex
    norms = np.linalg.norm(kernel, axis=1)
    keep = norms > 1e-8 * max(1.0, float(norms.max(initial=0.0)))
    kernel = kernel[keep]
    if kernel.shape[0] == 0:
        return []
    _, s, vt = np.linalg.svd(kernel, full_matrices=False)
    dim = int(np.sum(s > RANK_RCOND * s[0])) if s[0] > 0 else 0
    candidates = vt[:dim]

    # numeric verification at fresh points: candidates must commute with the
    # Cartan combinations and pairwise among themselves
    check_points = inv.sample_points(20, seed + 1, need_brackets=True)
    vals = np.array([inv.member_values(u) for u in check_points])
    grad_chk = _monomial_gradients(vals, monomials)
    brk_chk = np.array([bracket_matrix_at(inv, u) for u in check_points])
    # gradient of a candidate in member space at each point: (m, cand, k)
    cand_grad = np.einsum("ca,mai->mci", candidates, grad_chk)
    cartan_grad = np.broadcast_to(cartan.vectors, (len(check_points),) + cartan.vectors.shape)
    cross = np.einsum("mci,mij,mdj->mcd", cand_grad, brk_chk, cartan_grad)
    pairwise = np.einsum("mci,mij,mdj->mcd", cand_grad, brk_chk, cand_grad)
    verified = []
    for c_idx in range(candidates.shape[0]):
        worst = max(float(np.max(np.abs(cross[:, c_idx, :]))) if cross.size else 0.0,
                    float(np.max(np.abs(pairwise[:, c_idx, :]))) if pairwise.size else 0.0)
        if worst <= 1e-8:
            verified.append(candidates[c_idx])
    out = []
    for vec in verified:
        total: Expr | None = None
        scale_v = float(np.max(np.abs(vec)))
        for coeff, alpha in zip(vec, monomials):
            if abs(coeff) <= 1e-12 * scale_v:
                continue
            term = BinOp("*", Const(float(coeff)), _monomial_expr(inv, alpha))
            total = term if total is None else BinOp("+", total, term)
        if total is not None:
            out.append(simplify(total))
    return out


# ---------------------------------------------------------------------------
# pointwise dual abelian frame


def dual_abelian_pointwise(inv: InvariantSet, cartan: CartanBasis,
                           element: RegularElement) -> DualAbelianFrame:
    """n - r combinations over the Cartan complement, commuting at the witness.

    The complement bracket matrix W is skew; its real Schur form splits it
    into 2x2 rotation blocks, and taking one Schur vector per block yields a
    maximal set of mutually W-orthogonal directions.
    """
    if element.witness is None:
        raise RegularityError("regular element has no witness point")
    witness = inv.bind(element.witness)
    m_full = bracket_matrix_at(inv, witness)
    rank, _, vt = _numeric_rank(m_full)
    k = inv.k
    n = inv.structure.n
    r = k - rank
    m_count = n - r
    if rank != 2 * m_count:
        raise RegularityError(
            f"bracket-matrix rank {rank} at the witness is inconsistent with "
            f"the dimension condition (expected {2 * m_count})")
    complement = vt[:rank]                      # (2m, k) orthonormal rows
    w = complement @ m_full @ complement.T      # skew (2m, 2m)
    w = 0.5 * (w - w.T)
    t, z = scipy.linalg.schur(w, output="real")
    w_scale = float(np.max(np.abs(w))) if w.size else 0.0
    vectors = []
    i = 0
    while i < rank:
        if i + 1 < rank and abs(t[i + 1, i]) > RANK_RCOND * max(w_scale, 1e-300):
            vectors.append(z[:, i])
            i += 2
        else:
            i += 1
    if len(vectors) != m_count:
        raise RegularityError(
            "degenerate complement bracket matrix at the witness")
    vec_rows = np.array(vectors)                        # (m, 2m)
    combos = vec_rows @ complement                      # (m, k)
    cross = combos @ m_full @ combos.T
    max_cross = float(np.max(np.abs(cross))) if cross.size else 0.0
    return DualAbelianFrame(inv.names, complement, vec_rows, combos, element,
                            max_cross)
