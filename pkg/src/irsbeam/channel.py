"""Seeded Rayleigh channel realizations on the deployment geometry, effective
channels seen through the reflecting surface, and SINR/power accounting."""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

import numpy as np

from .numerics import TraceEntry
from .phase_model import ReflectionState


class Status(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"

    def __str__(self) -> str:  # CSV-friendly
        return self.value


@dataclass(frozen=True)
class SystemGeometry:
    """Node placement and path-loss law of the simulated deployment.

    The transmitter reference sits at (d_x, 0, 0), the surface reference at
    (0, d_y, 0), and users are drawn uniformly on the disk of radius r around
    (d_x, d, 0) in the z = 0 plane. Element spacing and the row split are
    recorded for provenance only; Rayleigh statistics never use them.
    """

    m: int
    n: int
    k: int
    d_x: float
    d_y: float
    d: float
    r: float = 0.0
    pl_ref_db: float = 40.0
    exp_ap_irs: float = 2.2
    exp_irs_user: float = 2.8
    exp_ap_user: float = 3.8
    element_spacing_m: float = 0.0625
    irs_rows: int = 5

    def __post_init__(self):
        if min(self.m, self.n, self.k) < 1:
            raise ValueError("antenna, element and user counts must be at least 1")
        if min(self.d_x, self.d_y, self.d) <= 0.0:
            raise ValueError("geometry distances must be positive")
        if self.r < 0.0:
            raise ValueError("cluster radius must be nonnegative")
        if min(self.exp_ap_irs, self.exp_irs_user, self.exp_ap_user) <= 0.0:
            raise ValueError("path-loss exponents must be positive")

    @property
    def ap_position(self) -> np.ndarray:
        return np.array([self.d_x, 0.0, 0.0])

    @property
    def irs_position(self) -> np.ndarray:
        return np.array([0.0, self.d_y, 0.0])

    @property
    def cluster_center(self) -> np.ndarray:
        return np.array([self.d_x, self.d, 0.0])


def path_loss(distance: float, exponent: float, pl_ref_db: float = 40.0) -> float:
    """Linear power gain at the given distance for a reference loss at 1 m."""
    if distance <= 0.0:
        raise ValueError(f"distance must be positive, got {distance}")
    return 10.0 ** (-pl_ref_db / 10.0) * float(distance) ** (-exponent)


def trial_rng(seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    """Child generator for one Monte Carlo trial.

    Each (trial, stream) pair gets an independent stream derived from the base
    seed, so trials reproduce identically regardless of execution order.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial, stream))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class ChannelSet:
    """One realization of every link plus per-user noise powers and SINR targets."""

    h_d: np.ndarray  # (K, M) transmitter-to-user
    h_r: np.ndarray  # (K, N) surface-to-user
    g: np.ndarray  # (N, M) transmitter-to-surface
    sigma2: np.ndarray  # (K,) noise powers, W
    gamma: np.ndarray  # (K,) linear SINR targets

    def __post_init__(self):
        h_d = np.asarray(self.h_d, dtype=complex)
        h_r = np.asarray(self.h_r, dtype=complex)
        g = np.asarray(self.g, dtype=complex)
        sigma2 = np.asarray(self.sigma2, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float)
        k, m = h_d.shape
        if h_r.shape[0] != k or g.shape != (h_r.shape[1], m):
            raise ValueError("channel dimensions are inconsistent")
        if sigma2.shape != (k,) or gamma.shape != (k,):
            raise ValueError("sigma2 and gamma must have one entry per user")
        if np.any(sigma2 <= 0.0) or np.any(gamma <= 0.0):
            raise ValueError("noise powers and SINR targets must be positive")
        for name, val in (("h_d", h_d), ("h_r", h_r), ("g", g), ("sigma2", sigma2), ("gamma", gamma)):
            object.__setattr__(self, name, val)

    @property
    def k(self) -> int:
        return self.h_d.shape[0]

    @property
    def m(self) -> int:
        return self.h_d.shape[1]

    @property
    def n(self) -> int:
        return self.h_r.shape[1]

    def composite(self, k: int) -> np.ndarray:
        """Cascaded surface channel of user k (row n scales g by conj(h_r[k, n]))."""
        return composite_matrix(self.h_r[k], self.g)

    def fingerprint(self) -> str:
        """Short stable hash of the realization, for cross-scheme bookkeeping."""
        digest = hashlib.sha256()
        for arr in (self.h_d, self.h_r, self.g, self.sigma2, self.gamma):
            digest.update(np.ascontiguousarray(arr).tobytes())
        return digest.hexdigest()[:12]


def generate_channels(geom: SystemGeometry, sigma2, gamma, seed) -> ChannelSet:
    """Draw one seeded realization: user positions uniform on the cluster disk,
    every channel entry circularly-symmetric Gaussian with the link path loss
    as variance. sigma2 (W) and gamma (linear) broadcast over users."""
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (geom.k,)).copy()
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (geom.k,)).copy()
    rng = np.random.default_rng(seed)

    u = rng.random((geom.k, 2))
    radius = geom.r * np.sqrt(u[:, 0])
    angle = 2.0 * np.pi * u[:, 1]
    users = geom.cluster_center[None, :] + np.stack(
        [radius * np.cos(angle), radius * np.sin(angle), np.zeros(geom.k)], axis=1
    )

    d_ap_user = np.linalg.norm(users - geom.ap_position[None, :], axis=1)
    d_irs_user = np.linalg.norm(users - geom.irs_position[None, :], axis=1)
    d_ap_irs = float(np.linalg.norm(geom.ap_position - geom.irs_position))

    var_d = np.array([path_loss(d, geom.exp_ap_user, geom.pl_ref_db) for d in d_ap_user])
    var_r = np.array([path_loss(d, geom.exp_irs_user, geom.pl_ref_db) for d in d_irs_user])
    var_g = path_loss(d_ap_irs, geom.exp_ap_irs, geom.pl_ref_db)

    def cn(shape, var):
        re = rng.standard_normal(shape)
        im = rng.standard_normal(shape)
        return np.sqrt(np.asarray(var) / 2.0) * (re + 1j * im)

    h_d = cn((geom.k, geom.m), var_d[:, None])
    h_r = cn((geom.k, geom.n), var_r[:, None])
    g = cn((geom.n, geom.m), var_g)
    return ChannelSet(h_d=h_d, h_r=h_r, g=g, sigma2=sigma2, gamma=gamma)


def composite_matrix(h_r_k: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Cascaded channel: row n of g scaled by conj(h_r_k[n])."""
    return np.conj(h_r_k)[:, None] * g


def effective_channel(v: np.ndarray, phi_k: np.ndarray, h_d_k: np.ndarray) -> np.ndarray:
    """Row-form effective channel v^H phi_k + h_d_k^H of one user."""
    return np.conj(v) @ phi_k + np.conj(h_d_k)


def effective_rows(channels: ChannelSet, v: np.ndarray) -> np.ndarray:
    """(K, M) stack of row-form effective channels for a reflection vector."""
    rows = [effective_channel(v, channels.composite(k), channels.h_d[k]) for k in range(channels.k)]
    return np.stack(rows, axis=0)


def sinr(eff_rows: np.ndarray, w: np.ndarray, sigma2, k: int) -> float:
    """SINR of user k for row-form effective channels and beamformer rows w."""
    sigma2 = np.atleast_1d(np.asarray(sigma2, dtype=float))
    y = eff_rows[k] @ w.T
    power = np.abs(y) ** 2
    signal = power[k]
    interference = float(power.sum() - signal)
    return float(signal / (interference + sigma2[k]))


def all_sinr(eff_rows: np.ndarray, w: np.ndarray, sigma2) -> np.ndarray:
    """Per-user SINRs; entry (k, j) of eff_rows @ w.T is h_k^H w_j."""
    sigma2 = np.asarray(sigma2, dtype=float)
    power = np.abs(eff_rows @ w.T) ** 2
    signal = np.diag(power)
    interference = power.sum(axis=1) - signal
    return signal / (interference + sigma2)


@dataclass(frozen=True)
class BeamformingSolution:
    """Joint design outcome: transmit beamformers, surface state, achieved
    SINRs, total power, and the per-iteration convergence trace."""

    w: np.ndarray  # (K, M), row k is user k's beamformer
    reflection: ReflectionState | None
    total_power: float
    sinr: np.ndarray
    trace: tuple[TraceEntry, ...]
    status: Status
    inner_iterations: int = 0
    outer_iterations: int = 0
    stop_reason: str = ""

    @classmethod
    def evaluate(
        cls,
        channels: ChannelSet,
        w: np.ndarray,
        reflection: ReflectionState | None,
        trace=(),
        status: Status = Status.CONVERGED,
        inner_iterations: int = 0,
        outer_iterations: int = 0,
    ) -> "BeamformingSolution":
        """Build a solution with power and SINRs recomputed from its parts."""
        if reflection is None:
            rows = np.conj(channels.h_d)
        else:
            rows = effective_rows(channels, reflection.v)
        return cls(
            w=np.asarray(w, dtype=complex),
            reflection=reflection,
            total_power=float(np.sum(np.abs(w) ** 2)),
            sinr=all_sinr(rows, w, channels.sigma2),
            trace=tuple(trace),
            status=status,
            inner_iterations=inner_iterations,
            outer_iterations=outer_iterations,
        )
