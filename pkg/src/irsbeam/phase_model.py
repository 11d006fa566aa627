"""Reflection model of a tunable passive element: the lumped circuit that
produces the phase/amplitude coupling, the analytical amplitude-vs-phase law
fitted to it, and the asymptotic power penalty of ignoring that coupling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


class SingularCircuitError(ArithmeticError):
    """Exact resonance or matching condition with no finite answer."""


def wrap_phase(theta):
    """Reduce angles to [-pi, pi), -pi inclusive. Works on scalars and arrays."""
    wrapped = (np.asarray(theta, dtype=float) + np.pi) % TWO_PI - np.pi
    if np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class PhaseShiftModel:
    """Amplitude-vs-phase law of one reflecting element.

    The amplitude dips to beta_min at phase phi - pi/2, returns to one at
    phi + pi/2, and alpha controls how steep the transition is. beta_min = 1
    or alpha = 0 degenerates to a flat unit amplitude.
    """

    beta_min: float
    phi: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.beta_min <= 1.0:
            raise ValueError(f"beta_min must lie in [0, 1], got {self.beta_min}")
        if self.phi < 0.0:
            raise ValueError(f"phi must be nonnegative, got {self.phi}")
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")

    @classmethod
    def ideal(cls) -> "PhaseShiftModel":
        """Flat unit amplitude at every phase shift."""
        return cls(beta_min=1.0, phi=0.0, alpha=0.0)

    def with_beta_min(self, beta_min: float) -> "PhaseShiftModel":
        return PhaseShiftModel(beta_min, self.phi, self.alpha)

    @property
    def is_ideal(self) -> bool:
        return self.beta_min == 1.0 or self.alpha == 0.0

    def amplitude(self, theta):
        """Reflection amplitude at phase shift theta; scalar or array, in [beta_min, 1]."""
        base = (np.sin(np.asarray(theta, dtype=float) - self.phi) + 1.0) / 2.0
        # rounding can push the sine fractionally outside [-1, 1]
        base = np.clip(base, 0.0, 1.0)
        value = (1.0 - self.beta_min) * base**self.alpha + self.beta_min
        if np.ndim(theta) == 0:
            return float(value)
        return value

    def reflection_coefficient(self, theta):
        """Complex reflection coefficient amplitude(theta) * exp(j * theta)."""
        theta = np.asarray(theta, dtype=float)
        value = self.amplitude(theta) * np.exp(1j * theta)
        if np.ndim(theta) == 0:
            return complex(value)
        return value

    def power_loss_ratio(self, panels: int = 4096) -> float:
        """Large-array received-power ratio practical/ideal when phases are
        designed as if the amplitude were flat: the squared mean amplitude
        over one full phase period (composite Simpson quadrature)."""
        theta = np.linspace(-np.pi, np.pi, 2 * panels + 1)
        beta = self.amplitude(theta)
        h = TWO_PI / (2 * panels)
        integral = (h / 3.0) * (
            beta[0] + beta[-1] + 4.0 * beta[1:-1:2].sum() + 2.0 * beta[2:-2:2].sum()
        )
        mean = integral / TWO_PI
        return mean**2


@dataclass(frozen=True)
class CircuitElement:
    """Lumped-circuit model of one reflecting element (parallel resonator)."""

    l1: float  # bottom-layer inductance, H
    l2: float  # top-layer inductance, H
    c: float  # effective capacitance, F
    r: float  # effective resistance, ohm
    z0: float  # free-space impedance, ohm
    omega: float  # angular frequency, rad/s

    def __post_init__(self):
        for name in ("l1", "l2", "c", "z0", "omega"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.r < 0.0:
            raise ValueError(f"r must be nonnegative, got {self.r}")

    def impedance(self) -> complex:
        """Input impedance of the top branch in parallel with the bottom inductor."""
        branch = 1j * self.omega * self.l2 + 1.0 / (1j * self.omega * self.c) + self.r
        shunt = 1j * self.omega * self.l1
        den = shunt + branch
        if den == 0:
            raise SingularCircuitError("singular impedance: exact resonant cancellation")
        return shunt * branch / den

    def reflection(self) -> complex:
        """Reflection coefficient against the free-space impedance; |.| <= 1 for r >= 0."""
        z = self.impedance()
        den = z + self.z0
        if den == 0:
            raise SingularCircuitError("singular reflection: impedance equals -z0")
        return (z - self.z0) / den


def circuit_impedance(elem: CircuitElement) -> complex:
    return elem.impedance()


def circuit_reflection(elem: CircuitElement) -> complex:
    return elem.reflection()


def sample_circuit_curve(l1, l2, z0, omega, r, c_grid) -> list[tuple[float, float]]:
    """(phase, amplitude) of the element reflection for each capacitance in c_grid."""
    c_grid = list(c_grid)
    if not c_grid:
        raise ValueError("capacitance grid must be non-empty")
    out = []
    for c in c_grid:
        v = CircuitElement(l1=l1, l2=l2, c=c, r=r, z0=z0, omega=omega).reflection()
        out.append((float(np.angle(v)), float(abs(v))))
    return out


@dataclass(frozen=True)
class ReflectionState:
    """Per-element phase shifts and the matching complex reflection coefficients."""

    theta: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        v = np.asarray(self.v, dtype=complex)
        if theta.ndim != 1 or v.shape != theta.shape:
            raise ValueError("theta and v must be 1-D arrays of equal length")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_phases(cls, model: PhaseShiftModel, theta) -> "ReflectionState":
        """Build the self-consistent state v = amplitude(theta) * exp(j theta)."""
        theta = wrap_phase(np.asarray(theta, dtype=float))
        return cls(theta=theta, v=model.reflection_coefficient(theta))

    @property
    def n(self) -> int:
        return self.theta.size

    def consistency_error(self, model: PhaseShiftModel) -> float:
        """Largest deviation of v from the model coefficient at theta."""
        if self.n == 0:
            return 0.0
        return float(np.max(np.abs(self.v - model.reflection_coefficient(self.theta))))
