"""Single-user transmit-power minimization: matched-filter reduction,
alternating per-element phase search, the penalty-driven relaxation, and the
discrete-phase variants."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, Status, effective_channel
from .numerics import Interval, SolverTolerances, TraceEntry, quad_fit_extremum
from .phase_model import PhaseShiftModel, ReflectionState, wrap_phase

# Inner concave-surrogate loop: stop on this relative objective change or cap.
_CCCP_TOL = 1e-6
_CCCP_MAX = 100
# A penalty coefficient below the top curvature of the gain makes the relaxed
# subproblem unbounded; iterates beyond this norm abort the sweep so the outer
# loop can escalate the coefficient with everything still finite.
_DIVERGENCE_FACTOR = 1e6


class ZeroChannelError(ValueError):
    """The channel vector is identically zero; no finite design exists."""


@dataclass(frozen=True)
class PenaltySchedule:
    """Penalty escalation: starting coefficient, growth factor per outer round,
    and the phase-matching trust-region half-width in radians."""

    mu0: float = 1e-15
    growth: float = 1.3
    delta: float = 0.05

    def __post_init__(self):
        if self.mu0 <= 0.0:
            raise ValueError("mu0 must be positive")
        if self.growth <= 1.0:
            raise ValueError("growth must exceed 1")
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")


@dataclass(frozen=True)
class ElementSubproblem:
    """Single-element slice of the channel-power objective: quadratic-in-amplitude
    term plus the phase-alignment cross term."""

    psi_nn: float
    varphi_n: complex
    model: PhaseShiftModel

    def __post_init__(self):
        if self.psi_nn < -1e-12:
            raise ValueError("diagonal coupling term must be nonnegative")

    def objective(self, theta):
        beta = self.model.amplitude(theta)
        mag = abs(self.varphi_n)
        arg = np.angle(self.varphi_n)
        return beta * beta * self.psi_nn + beta * mag * np.cos(arg - np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class PhaseSolution:
    """Converged reflection design together with its achieved gain and trace."""

    state: ReflectionState
    gain: float
    trace: tuple[TraceEntry, ...]
    status: Status
    inner_iterations: int = 0
    outer_iterations: int = 0


def mrt_beamformer(h_row: np.ndarray, power: float) -> np.ndarray:
    """Matched transmit vector with ||w||^2 = power for a row-form channel."""
    if power < 0.0:
        raise ValueError("power must be nonnegative")
    h_row = np.asarray(h_row, dtype=complex)
    nrm = np.linalg.norm(h_row)
    if nrm == 0.0:
        raise ZeroChannelError("zero channel")
    return np.sqrt(power) * h_row.conj() / nrm


def required_power(h_row: np.ndarray, gamma: float, sigma2: float) -> float:
    """Smallest transmit power meeting the SNR target over a row-form channel."""
    gain = float(np.sum(np.abs(h_row) ** 2))
    if gain == 0.0:
        raise ZeroChannelError("zero channel: target SNR is unreachable")
    return gamma * sigma2 / gain


def channel_gain(v: np.ndarray, phi: np.ndarray, h_d: np.ndarray) -> float:
    """Combined channel power gain ||v^H phi + h_d^H||^2."""
    row = effective_channel(v, phi, h_d)
    return float(np.sum(np.abs(row) ** 2))


def element_subproblem(
    v: np.ndarray, psi_matrix: np.ndarray, h_hat_d: np.ndarray, n: int, model: PhaseShiftModel
) -> ElementSubproblem:
    """Coefficients of the element-n slice of the channel-power objective.

    The returned objective differs from the full channel gain by a constant
    independent of theta_n, so per-element ascent on it is ascent on the gain.
    """
    cross = psi_matrix[n] @ v - psi_matrix[n, n] * v[n]
    varphi = 2.0 * (cross + h_hat_d[n])
    return ElementSubproblem(psi_nn=float(psi_matrix[n, n].real), varphi_n=complex(varphi), model=model)


def trust_region_p2(arg_varphi: float) -> Interval:
    """Interval from the cross-term phase to the near side of +/-pi that is
    expected to contain the element optimum."""
    if arg_varphi >= 0.0:
        return Interval(arg_varphi, np.pi)
    return Interval(arg_varphi, -np.pi)


def random_phase_init(n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Starting phases drawn from {pi, -pi}; both wrap to -pi, where the
    amplitude sits near its peak."""
    rng = np.random.default_rng() if rng is None else rng
    signs = rng.integers(0, 2, size=n)
    return wrap_phase(np.where(signs == 0, -np.pi, np.pi))


def _single_user_parts(channels: ChannelSet) -> tuple[np.ndarray, np.ndarray]:
    if channels.k != 1:
        raise ValueError(f"single-user solver needs k = 1, got k = {channels.k}")
    return channels.composite(0), channels.h_d[0]


def _init_theta(n: int, init, rng) -> np.ndarray:
    if init is None:
        return random_phase_init(n, rng)
    theta = init.theta if isinstance(init, ReflectionState) else np.asarray(init, dtype=float)
    if theta.shape != (n,):
        raise ValueError(f"initial phases must have length {n}")
    return wrap_phase(theta)


def ao_solve(
    channels: ChannelSet,
    model: PhaseShiftModel,
    init=None,
    tol: SolverTolerances | None = None,
    mode: str = "quadfit",
    grid_points: int = 1000,
    rng: np.random.Generator | None = None,
) -> PhaseSolution:
    """Cyclic per-element phase updates of the channel power gain (k = 1).

    Each element keeps its incumbent phase unless the candidate from the
    interpolation (or grid) step improves the element objective, so the gain
    trace is non-decreasing.
    """
    if mode not in ("quadfit", "grid"):
        raise ValueError(f"unknown mode {mode!r}")
    tol = tol or SolverTolerances()
    phi, h_d = _single_user_parts(channels)
    n_elems = phi.shape[0]
    theta = _init_theta(n_elems, init, rng)
    v = model.reflection_coefficient(theta)
    psi = phi @ phi.conj().T
    h_hat = phi @ h_d

    gain = channel_gain(v, phi, h_d)
    trace = [TraceEntry(0, gain, 0.0, 0.0, 0.0)]
    status = Status.MAX_ITERATIONS
    sweeps = 0
    for sweep in range(1, tol.max_inner + 1):
        sweeps = sweep
        for n in range(n_elems):
            sub = element_subproblem(v, psi, h_hat, n, model)
            region = trust_region_p2(wrap_phase(np.angle(sub.varphi_n)))
            if mode == "quadfit":
                cand, cand_val = quad_fit_extremum(sub.objective, region)
            else:
                pts = np.linspace(region.lo, region.hi, grid_points)
                vals = sub.objective(pts)
                idx = int(np.argmax(vals))
                cand, cand_val = float(pts[idx]), float(vals[idx])
            if cand_val > sub.objective(theta[n]):
                theta[n] = wrap_phase(cand)
                v[n] = model.reflection_coefficient(theta[n])
        new_gain = channel_gain(v, phi, h_d)
        trace.append(TraceEntry(sweep, new_gain, 0.0, 0.0, 0.0))
        if new_gain - gain <= tol.eps1 * max(abs(gain), 1e-300):
            gain = new_gain
            status = Status.CONVERGED
            break
        gain = new_gain
    state = ReflectionState.from_phases(model, theta)
    return PhaseSolution(
        state=state,
        gain=channel_gain(state.v, phi, h_d),
        trace=tuple(trace),
        status=status,
        inner_iterations=sweeps,
        outer_iterations=sweeps,
    )


def cccp_v_update(
    v_l: np.ndarray, phi: np.ndarray, h_d: np.ndarray, a: np.ndarray, mu: float
) -> np.ndarray:
    """One concave-surrogate step of the relaxed reflection vector: closed-form
    maximizer of the linearized gain minus the mu-weighted pull toward a."""
    if mu <= 0.0:
        raise ValueError("mu must be positive")
    return (phi @ (phi.conj().T @ v_l) + phi @ h_d + mu * a) / mu


def trust_region_p34(v_n: complex, model: PhaseShiftModel, delta: float) -> Interval | None:
    """Interval around arg(v_n) expected to contain the best phase-matching
    angle, or None when neither deviation test fires (keep the incumbent)."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    psi = wrap_phase(np.angle(v_n))
    direction = 1.0 if psi >= 0.0 else -1.0
    mag = abs(v_n)
    if 0.5 * (model.amplitude(psi) + model.amplitude(psi + delta)) < mag:
        return Interval(psi, psi + direction * delta)
    if 0.5 * (model.amplitude(psi) + model.amplitude(psi - delta)) > mag:
        return Interval(psi, psi - direction * delta)
    return None


def match_phase_update(
    v: np.ndarray, theta: np.ndarray, model: PhaseShiftModel, delta: float
) -> np.ndarray:
    """Per-element phase-matching pass: maximize 2 beta |v_n| cos(psi_n - t) - beta^2
    on each element's trust interval, keeping incumbents that no candidate beats.

    Vectorized equivalent of trust_region_p34 + quad_fit_extremum per element.
    """
    v = np.asarray(v, dtype=complex)
    theta = np.asarray(theta, dtype=float)
    psi = wrap_phase(np.angle(v))
    mag = np.abs(v)

    def objective(t):
        beta = model.amplitude(t)
        return 2.0 * beta * mag * np.cos(psi - t) - beta * beta

    direction = np.where(psi >= 0.0, 1.0, -1.0)
    up = 0.5 * (model.amplitude(psi) + model.amplitude(psi + delta)) < mag
    down = ~up & (0.5 * (model.amplitude(psi) + model.amplitude(psi - delta)) > mag)
    has_region = up | down
    hi = np.where(up, psi + direction * delta, psi - direction * delta)

    ta, tc = psi, hi
    tb = 0.5 * (ta + tc)
    f1, f2, f3 = objective(ta), objective(tb), objective(tc)
    den = 4.0 * (f1 - 2.0 * f2 + f3)
    with np.errstate(divide="ignore", invalid="ignore"):
        th = (ta * (f1 - 4.0 * f2 + 3.0 * f3) + tc * (3.0 * f1 - 4.0 * f2 + f3)) / den
    fit_ok = (den != 0.0) & np.isfinite(th)
    th = np.clip(np.where(fit_ok, th, ta), np.minimum(ta, tc), np.maximum(ta, tc))
    fth = np.where(fit_ok, objective(th), -np.inf)

    cand_theta = np.stack([th, ta, tb, tc], axis=0)
    cand_vals = np.stack([fth, f1, f2, f3], axis=0)
    best = np.argmax(cand_vals, axis=0)
    cols = np.arange(v.size)
    best_theta = cand_theta[best, cols]
    best_vals = cand_vals[best, cols]

    accept = has_region & (best_vals > objective(theta))
    return wrap_phase(np.where(accept, best_theta, theta))


def _weighted_penalty_engine(
    phis: list[np.ndarray],
    h_ds: list[np.ndarray],
    weights: np.ndarray,
    model: PhaseShiftModel,
    theta0: np.ndarray,
    schedule: PenaltySchedule,
    tol: SolverTolerances,
) -> PhaseSolution:
    """Penalty ascent of the weighted sum of channel power gains over the
    reflection-law manifold; shared by the k = 1 and weighted multiuser paths."""
    n_elems = phis[0].shape[0]
    s_mat = sum(w * (p @ p.conj().T) for w, p in zip(weights, phis))
    c_vec = sum(w * (p @ h) for w, p, h in zip(weights, phis, h_ds))
    const = sum(w * float(np.sum(np.abs(h) ** 2)) for w, h in zip(weights, h_ds))

    def gain(vec):
        return float((vec.conj() @ (s_mat @ vec)).real + 2.0 * (vec.conj() @ c_vec).real + const)

    theta = wrap_phase(theta0.copy())
    a = model.reflection_coefficient(theta)
    v = a.copy()
    guard = _DIVERGENCE_FACTOR * max(1.0, float(np.linalg.norm(a)))
    mu = schedule.mu0

    trace: list[TraceEntry] = []
    step = 0
    inner_total = 0
    status = Status.MAX_ITERATIONS
    outer_done = 0
    for outer in range(tol.max_outer):
        outer_done = outer + 1
        prev_obj = gain(v) - mu * float(np.sum(np.abs(v - a) ** 2))
        diverged = False
        for _ in range(tol.max_inner):
            inner_total += 1
            v, diverged = _cccp_loop(v, a, s_mat, c_vec, mu, gain, guard)
            theta = match_phase_update(v, theta, model, schedule.delta)
            a = model.reflection_coefficient(theta)
            violation = float(np.sum(np.abs(v - a) ** 2))
            obj = gain(v) - mu * violation
            step += 1
            trace.append(TraceEntry(step, obj, violation, mu, 0.0))
            if diverged or obj - prev_obj <= tol.eps1 * max(abs(prev_obj), 1e-300):
                break
            prev_obj = obj
        violation = float(np.sum(np.abs(v - a) ** 2))
        if violation < tol.eps2 and not diverged:
            status = Status.CONVERGED
            break
        mu *= schedule.growth

    state = ReflectionState.from_phases(model, theta)
    return PhaseSolution(
        state=state,
        gain=gain(state.v),
        trace=tuple(trace),
        status=status,
        inner_iterations=inner_total,
        outer_iterations=outer_done,
    )


def _cccp_loop(v, a, s_mat, c_vec, mu, gain, guard):
    """Iterate the surrogate step until the relaxed objective stalls; abort with
    a diverged flag (keeping the last accepted iterate) if the iterates blow up."""
    obj = gain(v) - mu * float(np.sum(np.abs(v - a) ** 2))
    for _ in range(_CCCP_MAX):
        v_new = a + (s_mat @ v + c_vec) / mu
        if not np.all(np.isfinite(v_new)) or np.linalg.norm(v_new) > guard:
            return v, True
        new_obj = gain(v_new) - mu * float(np.sum(np.abs(v_new - a) ** 2))
        v = v_new
        if abs(new_obj - obj) <= _CCCP_TOL * max(abs(obj), 1.0):
            return v, False
        obj = new_obj
    return v, False


def penalty_solve(
    channels: ChannelSet,
    model: PhaseShiftModel,
    init=None,
    schedule: PenaltySchedule | None = None,
    tol: SolverTolerances | None = None,
    rng: np.random.Generator | None = None,
) -> PhaseSolution:
    """Penalty method for the k = 1 gain maximization: alternate the relaxed
    reflection vector (concave surrogate steps) with per-element phase matching,
    escalating the penalty until the relaxation collapses onto the phase law."""
    schedule = schedule or PenaltySchedule()
    tol = tol or SolverTolerances()
    phi, h_d = _single_user_parts(channels)
    theta0 = _init_theta(phi.shape[0], init, rng)
    return _weighted_penalty_engine([phi], [h_d], np.ones(1), model, theta0, schedule, tol)


def discrete_phase_search(
    channels: ChannelSet,
    model: PhaseShiftModel,
    bits: int,
    assume_ideal: bool = False,
    init=None,
    tol: SolverTolerances | None = None,
    rng: np.random.Generator | None = None,
) -> ReflectionState:
    """Cyclic exhaustive search over 2^bits evenly spaced phase levels (k = 1).

    With assume_ideal the levels are scored as if the amplitude were flat; the
    returned state always carries the actual model's amplitudes.
    """
    if bits < 1:
        raise ValueError("bits must be at least 1")
    tol = tol or SolverTolerances()
    phi, h_d = _single_user_parts(channels)
    n_elems = phi.shape[0]
    levels = wrap_phase(np.arange(2**bits) * (2.0 * np.pi / 2**bits))
    select_model = PhaseShiftModel.ideal() if assume_ideal else model

    theta = _init_theta(n_elems, init, rng)
    # snap the start onto the grid so the search space is honest
    theta = levels[np.argmin(np.abs(wrap_phase(theta[:, None] - levels[None, :])), axis=1)]
    v = select_model.reflection_coefficient(theta)
    psi = phi @ phi.conj().T
    h_hat = phi @ h_d
    level_beta = select_model.amplitude(levels)

    gain = channel_gain(v, phi, h_d)
    for _ in range(tol.max_inner):
        changed = False
        for n in range(n_elems):
            sub = element_subproblem(v, psi, h_hat, n, select_model)
            mag = abs(sub.varphi_n)
            arg = np.angle(sub.varphi_n)
            vals = level_beta**2 * sub.psi_nn + level_beta * mag * np.cos(arg - levels)
            idx = int(np.argmax(vals))
            if vals[idx] > sub.objective(theta[n]):
                theta[n] = levels[idx]
                v[n] = select_model.reflection_coefficient(theta[n])
                changed = True
        new_gain = channel_gain(v, phi, h_d)
        if not changed or new_gain - gain <= tol.eps1 * max(abs(gain), 1e-300):
            break
        gain = new_gain
    return ReflectionState.from_phases(model, theta)


def ideal_alignment_phases(phi: np.ndarray, h_d: np.ndarray | None) -> np.ndarray:
    """Phases that co-phase every cascaded term with the direct link (m = 1);
    this is the optimal design when the amplitude is flat."""
    phi = np.asarray(phi)
    if phi.ndim != 2 or phi.shape[1] != 1:
        raise ValueError("closed-form alignment requires a single transmit antenna")
    direct = 0j if h_d is None else complex(np.asarray(h_d).reshape(-1)[0])
    ref = float(np.angle(direct)) if direct != 0 else 0.0
    return wrap_phase(np.angle(phi[:, 0]) + ref)
