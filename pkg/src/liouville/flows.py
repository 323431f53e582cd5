"""Numerical flows of Hamiltonian fields and flow-based diagnostics.

Two schemes: an adaptive embedded Runge-Kutta 5(4) pair (default) and a
fixed-step symmetric composition of order 4 for separable Hamiltonians
H = T(p) + V(q).  Trajectories carry one row per accepted step, or one row
per uniform sample when ``sample_dt`` is set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.integrate import RK45

from .expr import DomainError, EvalPoint, Expr, compile_functions, parameters_of
from .symplectic import SymplecticStructure, hamiltonian_vector_field
from .algebra import InvariantSet

__all__ = [
    "IntegrationError", "IntegratorConfig", "Trajectory", "ProbeReport",
    "integrate", "conservation_report", "flows_commute",
    "quasiperiodicity_probe", "trajectory_to_csv",
]

# Suzuki-Yoshida triple-jump coefficients for the order-4 composition
_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = 1.0 - 2.0 * _W1


class IntegrationError(Exception):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    """Scheme selection and control knobs for :func:`integrate`.

    ``scheme`` is "adaptive" (embedded 5(4) pair, local tolerance
    ``tolerance``) or "symmetric4" (fixed ``step``, separable H only).
    ``sample_dt`` switches the trajectory to a uniform output grid.
    ``collision_threshold`` aborts when the minimum pairwise squared
    distance between the per-degree points (q_j, p_j) drops below it.
    """

    scheme: str = "adaptive"
    tolerance: float = 1e-9
    step: float | None = None
    max_steps: int = 2_000_000
    sample_dt: float | None = None
    collision_threshold: float | None = None

    def __post_init__(self):
        if self.scheme not in ("adaptive", "symmetric4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "adaptive" and self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.scheme == "symmetric4" and (self.step is None or self.step <= 0):
            raise ValueError("symmetric4 needs a positive fixed step")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.sample_dt is not None and self.sample_dt <= 0:
            raise ValueError("sample_dt must be positive")


@dataclass
class Trajectory:
    """Times, states (rows of q1..qn,p1..pn), and provenance of one flow run."""

    times: np.ndarray
    states: np.ndarray
    hamiltonian_name: str
    config: IntegratorConfig
    params: dict[str, float] = field(default_factory=dict)
    error: str | None = None
    accepted_steps: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.times.ndim != 1 or self.states.ndim != 2 \
                or len(self.times) != len(self.states):
            raise ValueError("times and states must align")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must increase strictly")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("states must be finite")

    @property
    def n(self) -> int:
        return self.states.shape[1] // 2

    def final_point(self) -> EvalPoint:
        y = self.states[-1]
        n = self.n
        return EvalPoint(tuple(y[:n]), tuple(y[n:]), self.params)


def _min_pair_distance_sq(y: np.ndarray, n: int) -> float:
    best = math.inf
    for i in range(n):
        for j in range(i + 1, n):
            d = (y[i] - y[j]) ** 2 + (y[n + i] - y[n + j]) ** 2
            best = min(best, d)
    return best


def _compile_field(h: Expr, structure: SymplecticStructure,
                   params: Mapping[str, float]):
    unbound = parameters_of(h) - set(params)
    if unbound:
        raise ValueError(f"Hamiltonian uses unbound parameters: {sorted(unbound)}")
    fld = hamiltonian_vector_field(h, structure)
    return compile_functions(fld.dq + fld.dp, structure.n, params)


def integrate(h: Expr, structure: SymplecticStructure, u0: EvalPoint,
              t_final: float, config: IntegratorConfig = IntegratorConfig(),
              name: str = "H") -> Trajectory:
    """Integrate the flow of ``h`` from ``u0`` for time ``t_final`` (> 0).

    Domain errors, collisions, step underflow, and step-budget exhaustion
    truncate the trajectory and set ``error`` instead of raising.
    """
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    if u0.n != structure.n:
        raise ValueError("initial point dimension mismatch")
    rhs_core = _compile_field(h, structure, u0.params)
    y0 = u0.state()
    try:
        rhs_core(y0)
    except DomainError as exc:
        raise IntegrationError(f"initial point outside the domain: {exc}") from None
    if config.scheme == "adaptive":
        traj = _integrate_adaptive(rhs_core, y0, t_final, structure.n, config)
    else:
        traj = _integrate_symmetric4(rhs_core, u0, y0, t_final,
                                     structure.n, config)
    traj.hamiltonian_name = name
    traj.params = dict(u0.params)
    return traj


def _integrate_adaptive(rhs_core, y0, t_final, n, config) -> Trajectory:
    def rhs(t, y):
        return np.asarray(rhs_core(y), dtype=float)

    solver = RK45(rhs, 0.0, y0, t_bound=t_final,
                  rtol=config.tolerance, atol=config.tolerance)
    ts = [0.0]
    ys = [np.array(y0, dtype=float)]
    error = None
    steps = 0
    next_sample = config.sample_dt if config.sample_dt else None
    while solver.status == "running":
        if steps >= config.max_steps:
            error = "max_steps"
            break
        try:
            message = solver.step()
        except DomainError:
            error = "domain_error"
            break
        if solver.status == "failed":
            error = f"step_underflow: {message}"
            break
        steps += 1
        if config.collision_threshold is not None and \
                _min_pair_distance_sq(solver.y, n) < config.collision_threshold:
            error = "collision"
            break
        if next_sample is None:
            ts.append(solver.t)
            ys.append(solver.y.copy())
        else:
            dense = solver.dense_output()
            while next_sample <= solver.t * (1 + 1e-15):
                ts.append(next_sample)
                ys.append(np.asarray(dense(next_sample), dtype=float))
                next_sample += config.sample_dt
    return Trajectory(np.array(ts), np.array(ys), "H", config,
                      error=error, accepted_steps=steps)


def _check_separable(rhs_core, u0: EvalPoint, n: int) -> None:
    # dq components may depend only on p, dp components only on q
    rng = np.random.default_rng(7)
    base = u0.state()
    for _ in range(3):
        probe = base + rng.uniform(-0.3, 0.3, size=2 * n)
        alt_q = probe.copy()
        alt_q[:n] = probe[:n] + rng.uniform(0.1, 0.5, size=n)
        alt_p = probe.copy()
        alt_p[n:] = probe[n:] + rng.uniform(0.1, 0.5, size=n)
        try:
            f0 = np.asarray(rhs_core(probe))
            fq = np.asarray(rhs_core(alt_q))
            fp = np.asarray(rhs_core(alt_p))
        except DomainError:
            continue
        scale = 1.0 + np.max(np.abs(f0))
        if np.max(np.abs(fq[:n] - f0[:n])) > 1e-9 * scale or \
                np.max(np.abs(fp[n:] - f0[n:])) > 1e-9 * scale:
            raise ValueError(
                "the symmetric fixed-step scheme needs a separable "
                "Hamiltonian H = T(p) + V(q)")


def _integrate_symmetric4(rhs_core, u0, y0, t_final, n, config) -> Trajectory:
    _check_separable(rhs_core, u0, n)
    m = max(1, round(t_final / config.step))
    truncated_budget = m > config.max_steps
    dt = t_final / m
    if truncated_budget:
        m = config.max_steps
    y = np.array(y0, dtype=float)
    ts = [0.0]
    ys = [y.copy()]
    error = None

    def kick(state, h_step):
        f = rhs_core(state)
        state[n:] += h_step * np.asarray(f[n:])

    def drift(state, h_step):
        f = rhs_core(state)
        state[:n] += h_step * np.asarray(f[:n])

    for step_idx in range(m):
        try:
            for c in (_W1, _W0, _W1):
                kick(y, 0.5 * c * dt)
                drift(y, c * dt)
                kick(y, 0.5 * c * dt)
        except DomainError:
            error = "domain_error"
            break
        if not np.all(np.isfinite(y)):
            error = "domain_error"
            break
        if config.collision_threshold is not None and \
                _min_pair_distance_sq(y, n) < config.collision_threshold:
            error = "collision"
            break
        ts.append((step_idx + 1) * dt)
        ys.append(y.copy())
    if error is None and truncated_budget:
        error = "max_steps"
    return Trajectory(np.array(ts), np.array(ys), "H", config,
                      error=error, accepted_steps=len(ts) - 1)


def conservation_report(traj: Trajectory, inv: InvariantSet) -> dict[str, float]:
    """Max relative drift |F(u(t)) - F(u(0))| / (1 + |F(u(0))|) per member."""
    params = dict(inv.params)
    params.update(traj.params)
    fn = compile_functions(inv.exprs, inv.structure.n, params)
    values = np.array([fn(row) for row in traj.states])
    ref = values[0]
    drift = np.max(np.abs(values - ref), axis=0) / (1.0 + np.abs(ref))
    return {name: float(d) for name, d in zip(inv.names, drift)}


def flows_commute(a: Expr, b: Expr, structure: SymplecticStructure,
                  u0: EvalPoint, t: float, tau: float,
                  tol: float = 1e-6) -> tuple[bool, float]:
    """Compare flowing (a for t, then b for tau) against the reverse order.

    Both legs run the adaptive scheme at local tolerance tol/100; returns
    (endpoints agree within tol, euclidean defect).
    """
    config = IntegratorConfig(scheme="adaptive", tolerance=tol / 100.0)

    def run(h_expr, start, duration):
        traj = integrate(h_expr, structure, start, duration, config)
        if traj.error is not None:
            raise IntegrationError(f"flow leg failed: {traj.error}")
        return traj.final_point()

    ab = run(b, run(a, u0, t), tau)
    ba = run(a, run(b, u0, tau), t)
    defect = float(np.linalg.norm(ab.state() - ba.state()))
    return defect <= tol, defect


@dataclass
class ProbeReport:
    near_return_count: int
    best_return_time: float | None
    estimated_frequencies: list[float]
    resolution: float
    note: str = ("heuristic diagnostic: near-return counting and spectral "
                 "peak picking, not a proof of quasi-periodicity")


def _spectral_peaks(signal: np.ndarray, dt: float) -> list[tuple[float, float]]:
    m = len(signal)
    centered = signal - np.mean(signal)
    if np.max(np.abs(centered)) < 1e-12 * (1.0 + np.max(np.abs(signal))):
        return []
    window = np.hanning(m)
    amp = np.abs(np.fft.rfft(centered * window))
    freqs = np.fft.rfftfreq(m, d=dt)
    peaks = []
    cutoff = 0.1 * np.max(amp[1:]) if len(amp) > 1 else 0.0
    for k in range(1, len(amp) - 1):
        if amp[k] >= amp[k - 1] and amp[k] > amp[k + 1] and amp[k] > cutoff:
            # parabolic interpolation on log amplitude for sub-bin accuracy
            la, lb, lc = (math.log(max(amp[k - 1], 1e-300)),
                          math.log(max(amp[k], 1e-300)),
                          math.log(max(amp[k + 1], 1e-300)))
            denom = la - 2 * lb + lc
            delta = 0.5 * (la - lc) / denom if denom != 0 else 0.0
            delta = max(-0.5, min(0.5, delta))
            f = (k + delta) * (freqs[1] - freqs[0])
            peaks.append((2 * math.pi * f, float(amp[k])))
    return peaks


def quasiperiodicity_probe(traj: Trajectory, window: float,
                           epsilon: float) -> ProbeReport:
    """Count epsilon-returns to the initial state and estimate frequencies.

    Needs a uniformly sampled trajectory (``sample_dt``).  Returns are
    samples beyond the exclusion window whose distance to u(0) is at most
    epsilon.  Frequencies come from Hann-windowed coordinate spectra with
    parabolic peak interpolation; the documented resolution is 2*pi/T.
    """
    t = traj.times
    if len(t) < 16:
        raise ValueError("trajectory too short to probe")
    total = float(t[-1] - t[0])
    if total <= 2 * window:
        raise ValueError("trajectory too short relative to the window")
    steps = np.diff(t)
    dt = float(np.median(steps))
    if np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise ValueError("probe needs a uniformly sampled trajectory "
                         "(integrate with sample_dt)")
    dist = np.linalg.norm(traj.states - traj.states[0], axis=1)
    beyond = t >= window
    returns = beyond & (dist <= epsilon)
    count = int(np.sum(returns))
    best_time = None
    if count:
        idx = np.argmin(np.where(returns, dist, np.inf))
        best_time = float(t[idx])
    resolution = 2 * math.pi / total
    collected: list[tuple[float, float]] = []
    for col in range(traj.states.shape[1]):
        collected.extend(_spectral_peaks(traj.states[:, col], dt))
    collected.sort(key=lambda pair: -pair[1])
    merged: list[float] = []
    for omega, _ in collected:
        if all(abs(omega - kept) > resolution for kept in merged):
            merged.append(omega)
    merged.sort()
    return ProbeReport(count, best_time, merged, resolution)


def trajectory_to_csv(traj: Trajectory) -> str:
    """CSV text: header t,q1..qn,p1..pn, rows at 17 significant digits."""
    n = traj.n
    header = ",".join(["t"] + [f"q{i}" for i in range(1, n + 1)]
                      + [f"p{i}" for i in range(1, n + 1)])
    lines = [header]
    for t, row in zip(traj.times, traj.states):
        lines.append(",".join(f"{v:.17g}" for v in [t, *row]))
    return "\n".join(lines) + "\n"
