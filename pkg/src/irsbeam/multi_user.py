"""Multiuser joint transmit/reflect design: penalty-driven block coordinate
descent with auxiliary received-signal variables, the gain-then-precode
two-stage method, and the no-surface baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import (
    BeamformingSolution,
    ChannelSet,
    Status,
    all_sinr,
    effective_rows,
)
from .numerics import FixedPointError, SolverTolerances, TraceEntry, fixed_point
from .phase_model import PhaseShiftModel, ReflectionState
from .single_user import (
    PenaltySchedule,
    PhaseSolution,
    _init_theta,
    _weighted_penalty_engine,
    match_phase_update,
)

# Relative power change over three consecutive outer rounds below which the
# outer loop is declared stagnant.
_POWER_STALL_TOL = 1e-6
_FEASIBILITY_SLACK = 1e-3


class PrecoderInfeasibleError(RuntimeError):
    """No positive power allocation meets every SINR target."""


class ZeroSignalError(RuntimeError):
    """A user's own-signal term vanished while its SINR constraint is violated."""

    def __init__(self, user: int):
        super().__init__(f"user {user} infeasible at current beamformers")
        self.user = user


@dataclass(frozen=True)
class AuxiliarySignals:
    """Surrogates for the received signal terms h_k^H w_j, one row per user,
    each row SINR-feasible; dual holds the per-user multiplier that enforced it."""

    x: np.ndarray  # (K, K) complex
    dual: np.ndarray  # (K,) multipliers in [0, 1)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=complex)
        if x.ndim != 2 or x.shape[0] != x.shape[1]:
            raise ValueError("x must be a square matrix")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "dual", np.asarray(self.dual, dtype=float))

    def sinr(self, sigma2) -> np.ndarray:
        power = np.abs(self.x) ** 2
        signal = np.diag(power)
        interference = power.sum(axis=1) - signal
        return signal / (interference + np.asarray(sigma2, dtype=float))


@dataclass(frozen=True)
class MultiuserPenaltyState:
    """One snapshot of the block-coordinate state and penalty coefficients."""

    w: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    x: AuxiliarySignals
    mu: float
    nu: float


def w_update(eff_rows: np.ndarray, x: AuxiliarySignals, nu: float) -> np.ndarray:
    """Exact minimizer of total power plus the nu-weighted coupling penalty;
    returns the (K, M) beamformer rows."""
    if nu <= 0.0:
        raise ValueError("nu must be positive")
    m = eff_rows.shape[1]
    h_cols = eff_rows.conj().T  # (M, K), column k is user k's channel
    a_mat = np.eye(m, dtype=complex) + nu * (h_cols @ h_cols.conj().T)
    b_mat = h_cols @ x.x  # column k: sum_j h_j x[j, k]
    return (nu * np.linalg.solve(a_mat, b_mat)).T


def v_update(
    channels: ChannelSet,
    w: np.ndarray,
    x: AuxiliarySignals,
    a: np.ndarray,
    mu: float,
    nu: float,
    phis: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Exact minimizer over the relaxed reflection vector of the mu-weighted
    pull toward the phase-law point a plus the nu-weighted coupling penalty."""
    if mu <= 0.0 or nu < 0.0:
        raise ValueError("mu must be positive and nu nonnegative")
    if phis is None:
        phis = [channels.composite(k) for k in range(channels.k)]
    k = channels.k
    n = channels.n
    # d[k, j] = phi_k w_j ; c[k, j] = x[k, j] - h_{d,k}^H w_j
    d = np.einsum("knm,jm->kjn", np.stack(phis), w)
    c = x.x - channels.h_d.conj() @ w.T
    d2 = d.reshape(k * k, n)
    c2 = c.reshape(k * k)
    a_mat = mu * np.eye(n, dtype=complex) + nu * (d2.T @ d2.conj())
    rhs = mu * a + nu * (d2.T @ c2.conj())
    return np.linalg.solve(a_mat, rhs)


def theta_update(
    v: np.ndarray, theta: np.ndarray, model: PhaseShiftModel, delta: float
) -> np.ndarray:
    """Per-element phase matching of the relaxed reflection vector (independent
    elements, improve-only)."""
    return match_phase_update(v, theta, model, delta)


def _dual_bisect(gfun, eps3: float, max_iter: int = 200) -> float:
    """Bisection for the increasing dual function on [0, 1), returning the
    upper (feasible) end of the final bracket."""
    lo, hi = 0.0, 1.0 - 1e-12
    if gfun(hi) < 0.0:
        raise PrecoderInfeasibleError("dual search failed to bracket the SINR constraint")
    for _ in range(max_iter):
        if hi - lo <= eps3:
            break
        mid = 0.5 * (lo + hi)
        if gfun(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def x_update(
    eff_rows: np.ndarray, w: np.ndarray, gamma, sigma2, eps3: float = 1e-6
) -> AuxiliarySignals:
    """Per-user projection of the received-signal terms onto the SINR-feasible
    set: a scaled copy of h_k^H w_j with the scaling fixed by a dual bisection."""
    gamma = np.asarray(gamma, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    y = eff_rows @ w.T
    x = y.copy()
    dual = np.zeros(y.shape[0])
    for k in range(y.shape[0]):
        power = np.abs(y[k]) ** 2
        signal = float(power[k])
        interference = float(power.sum() - signal)
        if signal >= gamma[k] * (interference + sigma2[k]):
            continue
        if signal == 0.0:
            raise ZeroSignalError(k)

        def gfun(lam, signal=signal, interference=interference, k=k):
            return (
                signal / (1.0 - lam) ** 2
                - gamma[k] * interference / (1.0 + lam * gamma[k]) ** 2
                - gamma[k] * sigma2[k]
            )

        lam = _dual_bisect(gfun, eps3)
        dual[k] = lam
        x[k] = y[k] / (1.0 + lam * gamma[k])
        x[k, k] = y[k][k] / (1.0 - lam)
    return AuxiliarySignals(x=x, dual=dual)


def _fallback_beamformers(eff_rows: np.ndarray, gamma, sigma2) -> np.ndarray:
    """Matched rows scaled to hit each target ignoring interference."""
    gamma = np.asarray(gamma, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    norms = np.linalg.norm(eff_rows, axis=1)
    if np.any(norms == 0.0):
        raise PrecoderInfeasibleError("a user channel is identically zero")
    scale = np.sqrt(gamma * sigma2) / norms**2
    return scale[:, None] * eff_rows.conj()


def initial_state(
    channels: ChannelSet,
    model: PhaseShiftModel,
    init,
    rng,
    schedule: PenaltySchedule,
    nu0: float,
    eps3: float,
) -> MultiuserPenaltyState:
    """Feasible-in-x, phase-law-consistent starting point for the penalty BCD."""
    theta = _init_theta(channels.n, init, rng)
    v = model.reflection_coefficient(theta)
    eff = effective_rows(channels, v)
    try:
        w, _ = mmse_precoder(eff, channels.gamma, channels.sigma2)
    except PrecoderInfeasibleError:
        w = _fallback_beamformers(eff, channels.gamma, channels.sigma2)
    try:
        aux = x_update(eff, w, channels.gamma, channels.sigma2, eps3)
    except ZeroSignalError:
        aux = AuxiliarySignals(x=eff @ w.T, dual=np.zeros(channels.k))
    return MultiuserPenaltyState(w=w, v=v, theta=theta, x=aux, mu=schedule.mu0, nu=nu0)


def extended_penalty_solve(
    channels: ChannelSet,
    model: PhaseShiftModel,
    init=None,
    schedule: PenaltySchedule | None = None,
    nu0: float = 10.0,
    tol: SolverTolerances | None = None,
    rng: np.random.Generator | None = None,
) -> BeamformingSolution:
    """Two-layer penalty method for the multiuser power minimization.

    The inner layer cycles exact minimizers over beamformers, relaxed
    reflection vector, phases (improve-only), and auxiliary signals; the outer
    layer escalates both penalty coefficients until the relaxation is
    consistent or the power trace stalls.
    """
    schedule = schedule or PenaltySchedule(mu0=1e-14)
    tol = tol or SolverTolerances(eps2=1e-5)
    phis = [channels.composite(k) for k in range(channels.k)]
    h_d_rows = channels.h_d.conj()

    def rows_for(vec):
        return np.stack([vec.conj() @ phis[k] for k in range(channels.k)]) + h_d_rows

    state = initial_state(channels, model, init, rng, schedule, nu0, tol.eps3)
    w, v, theta, aux = state.w, state.v, state.theta, state.x
    mu, nu = state.mu, state.nu
    a = model.reflection_coefficient(theta)
    eff = rows_for(v)

    def objective(w_, v_, a_, x_, eff_, mu_, nu_):
        power = float(np.sum(np.abs(w_) ** 2))
        viol_model = float(np.sum(np.abs(v_ - a_) ** 2))
        viol_couple = float(np.sum(np.abs(eff_ @ w_.T - x_) ** 2))
        return power + mu_ * viol_model + nu_ * viol_couple, viol_model, viol_couple, power

    trace: list[TraceEntry] = []
    powers: list[float] = []
    step = 0
    inner_total = 0
    outer_done = 0
    stop_reason = ""
    for _ in range(tol.max_outer):
        outer_done += 1
        prev_obj = objective(w, v, a, aux.x, eff, mu, nu)[0]
        for _ in range(tol.max_inner):
            inner_total += 1
            w = w_update(eff, aux, nu)
            v = v_update(channels, w, aux, a, mu, nu, phis=phis)
            eff = rows_for(v)
            theta = theta_update(v, theta, model, schedule.delta)
            a = model.reflection_coefficient(theta)
            try:
                aux = x_update(eff, w, channels.gamma, channels.sigma2, tol.eps3)
            except ZeroSignalError:
                pass  # keep the previous feasible surrogates for this round
            obj, viol_model, viol_couple, power = objective(w, v, a, aux.x, eff, mu, nu)
            step += 1
            trace.append(TraceEntry(step, obj, viol_model + viol_couple, mu, nu))
            if prev_obj - obj <= tol.eps1 * max(abs(prev_obj), 1e-300):
                break
            prev_obj = obj
        _, viol_model, viol_couple, power = objective(w, v, a, aux.x, eff, mu, nu)
        powers.append(power)
        if viol_model < tol.eps2 and viol_couple < tol.eps2:
            stop_reason = "violation"
            break
        if len(powers) >= 4:
            recent = powers[-4:]
            scale = max(max(recent), 1e-300)
            if max(abs(recent[i + 1] - recent[i]) for i in range(3)) < _POWER_STALL_TOL * scale:
                stop_reason = "power-stall"
                break
        mu *= schedule.growth
        nu *= schedule.growth

    reflection = ReflectionState.from_phases(model, theta)
    eff_final = rows_for(reflection.v)
    sinrs = all_sinr(eff_final, w, channels.sigma2)
    feasible = bool(np.all(sinrs >= channels.gamma * (1.0 - _FEASIBILITY_SLACK)))
    if not feasible:
        status = Status.INFEASIBLE
    elif stop_reason:
        status = Status.CONVERGED
    else:
        status = Status.MAX_ITERATIONS
    return BeamformingSolution(
        w=w,
        reflection=reflection,
        total_power=float(np.sum(np.abs(w) ** 2)),
        sinr=sinrs,
        trace=tuple(trace),
        status=status,
        inner_iterations=inner_total,
        outer_iterations=outer_done,
        stop_reason=stop_reason,
    )


def weighted_gain_solve(
    channels: ChannelSet,
    model: PhaseShiftModel,
    weights=None,
    schedule: PenaltySchedule | None = None,
    tol: SolverTolerances | None = None,
    init=None,
    rng: np.random.Generator | None = None,
) -> PhaseSolution:
    """Penalty ascent of the target-weighted sum of effective channel power
    gains over the phase law; default weights 1 / (gamma_k sigma_k^2).

    Weights are normalized to unit mean (the maximizer is scale-invariant), so
    k = 1 reduces exactly to the single-user penalty solve.
    """
    schedule = schedule or PenaltySchedule()
    tol = tol or SolverTolerances(eps2=1e-5)
    if weights is None:
        weights = 1.0 / (channels.gamma * channels.sigma2)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (channels.k,) or np.any(weights <= 0.0):
        raise ValueError("weights must be positive, one per user")
    weights = weights / weights.mean()
    phis = [channels.composite(k) for k in range(channels.k)]
    h_ds = [channels.h_d[k] for k in range(channels.k)]
    theta0 = _init_theta(channels.n, init, rng)
    return _weighted_penalty_engine(phis, h_ds, weights, model, theta0, schedule, tol)


def mmse_precoder(
    eff_rows: np.ndarray,
    gamma,
    sigma2,
    fp_tol: float = 1e-12,
    max_fp_iter: int = 2000,
) -> tuple[np.ndarray, np.ndarray]:
    """Power-minimizing precoder meeting every SINR target with equality.

    Dual powers come from the uplink fixed point; directions are the dual
    receive filters; downlink powers solve the coupling system. Raises
    PrecoderInfeasibleError when the fixed point diverges, the coupling system
    is singular, or any power is non-positive.
    """
    eff_rows = np.asarray(eff_rows, dtype=complex)
    gamma = np.asarray(gamma, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    k, m = eff_rows.shape
    if np.any(np.linalg.norm(eff_rows, axis=1) == 0.0):
        raise PrecoderInfeasibleError("a user channel is identically zero")
    h_cols = eff_rows.conj().T  # (M, K)

    def filtered(rho):
        b_mat = np.eye(m, dtype=complex) + (h_cols * (rho / sigma2)) @ h_cols.conj().T
        return np.linalg.solve(b_mat, h_cols)

    def dual_map(rho):
        binv_h = filtered(rho)
        quad = np.real(np.sum(h_cols.conj() * binv_h, axis=0))
        return sigma2 / ((1.0 + 1.0 / gamma) * quad)

    try:
        rho = fixed_point(dual_map, sigma2.copy(), tol=fp_tol, max_iter=max_fp_iter)
    except FixedPointError as err:
        raise PrecoderInfeasibleError("dual power fixed point did not converge") from err

    binv_h = filtered(rho)
    directions = binv_h / np.linalg.norm(binv_h, axis=0)  # (M, K), unit columns
    cross = np.abs(eff_rows @ directions) ** 2  # (i, j): |h_i^H w_hat_j|^2
    q_mat = -cross
    np.fill_diagonal(q_mat, np.diag(cross) / gamma)
    try:
        p = np.linalg.solve(q_mat, sigma2)
    except np.linalg.LinAlgError as err:
        raise PrecoderInfeasibleError("power coupling system is singular") from err
    if not np.all(np.isfinite(p)) or np.any(p <= 0.0):
        raise PrecoderInfeasibleError("no positive power allocation meets the targets")
    w = (np.sqrt(p)[None, :] * directions).T  # rows w_k
    return w, p


def two_stage_solve(
    channels: ChannelSet,
    model: PhaseShiftModel,
    schedule: PenaltySchedule | None = None,
    tol: SolverTolerances | None = None,
    init=None,
    rng: np.random.Generator | None = None,
) -> BeamformingSolution:
    """Weighted gain maximization for the surface, then the exact precoder on
    the resulting effective channels."""
    stage1 = weighted_gain_solve(channels, model, schedule=schedule, tol=tol, init=init, rng=rng)
    reflection = stage1.state
    eff = effective_rows(channels, reflection.v)
    try:
        w, _ = mmse_precoder(eff, channels.gamma, channels.sigma2)
    except PrecoderInfeasibleError:
        zeros = np.zeros((channels.k, channels.m), dtype=complex)
        return BeamformingSolution(
            w=zeros,
            reflection=reflection,
            total_power=float("inf"),
            sinr=np.zeros(channels.k),
            trace=stage1.trace,
            status=Status.INFEASIBLE,
            inner_iterations=stage1.inner_iterations,
            outer_iterations=stage1.outer_iterations,
            stop_reason="precoder-infeasible",
        )
    sinrs = all_sinr(eff, w, channels.sigma2)
    feasible = bool(np.all(sinrs >= channels.gamma * (1.0 - _FEASIBILITY_SLACK)))
    status = stage1.status if feasible else Status.INFEASIBLE
    return BeamformingSolution(
        w=w,
        reflection=reflection,
        total_power=float(np.sum(np.abs(w) ** 2)),
        sinr=sinrs,
        trace=stage1.trace,
        status=status,
        inner_iterations=stage1.inner_iterations,
        outer_iterations=stage1.outer_iterations,
    )


def no_irs_baseline(channels: ChannelSet, tol: SolverTolerances | None = None) -> BeamformingSolution:
    """Exact precoder over the direct channels only."""
    rows = channels.h_d.conj()
    try:
        w, _ = mmse_precoder(rows, channels.gamma, channels.sigma2)
    except PrecoderInfeasibleError:
        zeros = np.zeros((channels.k, channels.m), dtype=complex)
        return BeamformingSolution(
            w=zeros,
            reflection=None,
            total_power=float("inf"),
            sinr=np.zeros(channels.k),
            trace=(),
            status=Status.INFEASIBLE,
            stop_reason="precoder-infeasible",
        )
    sinrs = all_sinr(rows, w, channels.sigma2)
    return BeamformingSolution(
        w=w,
        reflection=None,
        total_power=float(np.sum(np.abs(w) ** 2)),
        sinr=sinrs,
        trace=(),
        status=Status.CONVERGED,
    )
