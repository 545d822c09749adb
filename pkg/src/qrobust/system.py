"""Quantum system, control field, GA genome and uncertainty distributions.

Units: hbar = 1, energies are angular frequencies, times are inverse
angular frequencies.  All objects are immutable value types and safe to
share between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Union

import numpy as np

from .errors import ValidationError

TWO_PI = 2.0 * math.pi


def _as_readonly(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class QuantumSystem:
    """N-level system with diagonal drift Hamiltonian and dipole coupling.

    H(t) = diag(energies) - dipole * eps(t)

    Parameters
    ----------
    energies : (N,) array_like
        Diagonal of the drift Hamiltonian, sorted non-decreasing.
    dipole : (N, N) array_like
        Real symmetric coupling matrix.
    """

    energies: np.ndarray
    dipole: np.ndarray

    def __post_init__(self):
        en = _as_readonly(self.energies)
        mu = _as_readonly(self.dipole)
        if en.ndim != 1 or en.size < 2:
            raise ValidationError("energies must be a 1-D vector with N >= 2")
        n = en.size
        if mu.shape != (n, n):
            raise ValidationError(f"dipole must be {n}x{n}, got {mu.shape}")
        if not np.all(np.isfinite(en)) or not np.all(np.isfinite(mu)):
            raise ValidationError("energies and dipole must be finite")
        if np.any(np.diff(en) < 0):
            raise ValidationError("energies must be sorted non-decreasing")
        if not np.array_equal(mu, mu.T):
            raise ValidationError("dipole matrix must be symmetric")
        object.__setattr__(self, "energies", en)
        object.__setattr__(self, "dipole", mu)

    @property
    def dimension(self) -> int:
        return self.energies.size

    def coupling(self, i: int, j: int) -> float:
        """Dipole element between states i and j (0-based)."""
        return float(self.dipole[i, j])

    def transition_frequency(self, i: int, j: int) -> float:
        """Angular frequency E_j - E_i of the i -> j transition."""
        return float(self.energies[j] - self.energies[i])

    def with_coupling(self, i: int, j: int, value: float) -> "QuantumSystem":
        """Copy of the system with the (i, j) and (j, i) coupling replaced."""
        mu = np.array(self.dipole)
        mu[i, j] = value
        mu[j, i] = value
        return QuantumSystem(self.energies, mu)


#: Built-in five-level benchmark: unit-spaced ladder (spacing 0.5) with the
#: target state |3> (0-based) reachable from states 0, 1 and 4 only.
_PAPER5 = QuantumSystem(
    energies=[0.0, 0.5, 1.0, 1.5, 2.0],
    dipole=[
        [0, 2, 2, 1, 0],
        [2, 0, 0, 2, 0],
        [2, 0, 0, 0, 2],
        [1, 2, 0, 0, 2],
        [0, 0, 2, 2, 0],
    ],
)

_BUILTIN_SYSTEMS = {"paper5": _PAPER5}


def example_system(name: str = "paper5") -> QuantumSystem:
    """Return a built-in example system by name."""
    try:
        return _BUILTIN_SYSTEMS[name]
    except KeyError:
        raise ValidationError(
            f"unknown built-in system {name!r}; available: {sorted(_BUILTIN_SYSTEMS)}"
        ) from None


@dataclass(frozen=True)
class FieldBounds:
    """Box constraints for control-field parameters.

    Phases always live on [0, 2*pi) and are wrapped rather than clipped.
    """

    amp_min: float = 0.0
    amp_max: float = 1.0
    omega_min: float = 0.05
    omega_max: float = 4.0

    def __post_init__(self):
        if not (0 <= self.amp_min <= self.amp_max):
            raise ValidationError("need 0 <= amp_min <= amp_max")
        if not (0 <= self.omega_min < self.omega_max):
            raise ValidationError("need 0 <= omega_min < omega_max")

    def gene_lows(self, n_modes: int) -> np.ndarray:
        """Lower bounds of the [frequencies | phases] gene vector."""
        return np.concatenate([np.full(n_modes, self.omega_min), np.zeros(n_modes)])

    def gene_highs(self, n_modes: int) -> np.ndarray:
        return np.concatenate([np.full(n_modes, self.omega_max), np.full(n_modes, TWO_PI)])

    def contains_field(self, fld: "ControlField") -> bool:
        return bool(
            np.all(fld.amplitudes >= self.amp_min - 1e-15)
            and np.all(fld.amplitudes <= self.amp_max + 1e-15)
            and np.all(fld.frequencies >= self.omega_min - 1e-15)
            and np.all(fld.frequencies <= self.omega_max + 1e-15)
        )


def wrap_phase(phi):
    """Wrap phases onto [0, 2*pi)."""
    return np.mod(phi, TWO_PI)


@dataclass(frozen=True)
class ControlField:
    """Multimode cosine control field eps(t) = sum_k A_k cos(w_k t + phi_k)."""

    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray
    duration: float

    def __post_init__(self):
        a = _as_readonly(self.amplitudes)
        w = _as_readonly(self.frequencies)
        p = _as_readonly(self.phases)
        if not (a.shape == w.shape == p.shape) or a.ndim != 1 or a.size == 0:
            raise ValidationError("amplitudes, frequencies, phases must share a 1-D shape")
        if np.any(a < 0) or np.any(w < 0):
            raise ValidationError("amplitudes and frequencies must be non-negative")
        if not self.duration > 0:
            raise ValidationError("duration must be positive")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "phases", p)

    @property
    def n_modes(self) -> int:
        return self.amplitudes.size

    def evaluate(self, t):
        """Field value at time t (scalar or array); t must lie in [0, T]."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.duration):
            raise ValidationError(
                f"t outside the field domain [0, {self.duration}]"
            )
        phase = np.multiply.outer(t, self.frequencies) + self.phases
        out = (self.amplitudes * np.cos(phase)).sum(axis=-1)
        return float(out) if out.ndim == 0 else out

    def sample_midpoints(self, n_steps: int) -> np.ndarray:
        """Field at the n_steps midpoint times of a uniform grid over [0, T]."""
        dt = self.duration / n_steps
        tm = (np.arange(n_steps) + 0.5) * dt
        return self.evaluate(tm)

    def with_amplitudes(self, amplitudes) -> "ControlField":
        return ControlField(amplitudes, self.frequencies, self.phases, self.duration)


def field_evaluate(fld: ControlField, t) -> float:
    """Evaluate eps(t); raises ValidationError for t outside [0, T]."""
    return fld.evaluate(t)


@dataclass(frozen=True)
class Chromosome:
    """GA genome: K mode frequencies and phases with one shared amplitude.

    The gene vector layout is [w_1..w_K, phi_1..phi_K]; amplitudes are not
    searched because they carry the noise in the closed-loop setting.
    """

    frequencies: np.ndarray
    phases: np.ndarray
    fixed_amplitude: float

    def __post_init__(self):
        w = _as_readonly(self.frequencies)
        p = _as_readonly(self.phases)
        if w.shape != p.shape or w.ndim != 1 or w.size == 0:
            raise ValidationError("frequencies and phases must share a 1-D shape")
        if self.fixed_amplitude < 0:
            raise ValidationError("fixed_amplitude must be non-negative")
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "phases", p)

    @property
    def n_modes(self) -> int:
        return self.frequencies.size

    @property
    def genes(self) -> np.ndarray:
        return np.concatenate([self.frequencies, self.phases])

    @classmethod
    def from_genes(cls, genes, fixed_amplitude: float) -> "Chromosome":
        genes = np.asarray(genes, dtype=float)
        if genes.ndim != 1 or genes.size % 2:
            raise ValidationError("gene vector must have even length [freqs | phases]")
        k = genes.size // 2
        return cls(genes[:k], genes[k:], fixed_amplitude)

    def to_field(self, duration: float) -> ControlField:
        return ControlField(
            np.full(self.n_modes, self.fixed_amplitude),
            self.frequencies,
            self.phases,
            duration,
        )

    @classmethod
    def from_field(cls, fld: ControlField) -> "Chromosome":
        amps = np.unique(fld.amplitudes)
        if amps.size != 1:
            raise ValidationError("chromosome requires a single shared amplitude")
        return cls(fld.frequencies, fld.phases, float(amps[0]))


@dataclass(frozen=True)
class DipoleElement:
    """Uncertain dipole coupling mu_ij; perturbing (i, j) perturbs (j, i)."""

    i: int
    j: int

    def __post_init__(self):
        if not (0 <= self.i < self.j):
            raise ValidationError("DipoleElement requires 0 <= i < j")

    def nominal(self, system: QuantumSystem, fld: ControlField | None = None) -> float:
        return system.coupling(self.i, self.j)

    def label(self) -> str:
        return f"mu[{self.i},{self.j}]"


@dataclass(frozen=True)
class ModeAmplitude:
    """Uncertain amplitude of field mode k (0-based)."""

    k: int

    def __post_init__(self):
        if self.k < 0:
            raise ValidationError("mode index must be non-negative")

    def nominal(self, system: QuantumSystem, fld: ControlField | None = None) -> float:
        if fld is None:
            raise ValidationError("mode-amplitude target needs a field")
        if self.k >= fld.n_modes:
            raise ValidationError(f"mode index {self.k} out of range")
        return float(fld.amplitudes[self.k])

    def label(self) -> str:
        return f"A[{self.k}]"


ParameterTarget = Union[DipoleElement, ModeAmplitude]


@dataclass(frozen=True)
class ParameterDistribution:
    """Closed-form uncertainty law for a single parameter.

    kind is one of "gaussian", "uniform" or "point".  With relative=True the
    law describes a dimensionless factor xi and the physical parameter is
    theta = nominal * xi; with relative=False it describes theta directly.
    The "point" kind is the degenerate sigma -> 0 limit used to express
    noise-free baselines.
    """

    kind: str
    mean: float = 1.0
    sigma: float = 0.0
    lower: float = 0.0
    upper: float = 0.0
    relative: bool = True

    def __post_init__(self):
        if self.kind == "gaussian":
            if not self.sigma > 0:
                raise ValidationError("gaussian distribution needs sigma > 0")
        elif self.kind == "uniform":
            if not self.lower < self.upper:
                raise ValidationError("uniform distribution needs lower < upper")
        elif self.kind == "point":
            pass
        else:
            raise ValidationError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def gaussian(cls, mean: float, sigma: float, relative: bool = True):
        return cls("gaussian", mean=mean, sigma=sigma, relative=relative)

    @classmethod
    def uniform(cls, lower: float, upper: float, relative: bool = True):
        return cls("uniform", lower=lower, upper=upper, relative=relative)

    @classmethod
    def point(cls, value: float = 1.0, relative: bool = True):
        return cls("point", mean=value, relative=relative)

    @property
    def is_point_mass(self) -> bool:
        return self.kind == "point"

    def raw_moment(self, k: int) -> float:
        """k-th raw moment E[x^k] of the law (of xi when relative)."""
        if k < 0:
            raise ValidationError("moment order must be >= 0")
        if k == 0:
            return 1.0
        if self.kind == "gaussian":
            # noncentral recursion m_k = mean m_{k-1} + (k-1) sigma^2 m_{k-2}
            m_prev, m = 1.0, self.mean
            for order in range(2, k + 1):
                m_prev, m = m, self.mean * m + (order - 1) * self.sigma**2 * m_prev
            return m
        if self.kind == "uniform":
            a, b = self.lower, self.upper
            return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))
        return self.mean**k

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == "gaussian":
            return rng.normal(self.mean, self.sigma, size=size)
        if self.kind == "uniform":
            return rng.uniform(self.lower, self.upper, size=size)
        if size is None:
            return self.mean
        return np.full(size, self.mean)


@dataclass(frozen=True)
class UncertainParameter:
    """A parameter target together with its uncertainty law."""

    target: ParameterTarget
    distribution: ParameterDistribution

    def nominal(self, system: QuantumSystem, fld: ControlField | None = None) -> float:
        return self.target.nominal(system, fld)

    def theta_moment(self, k: int, nominal: float) -> float:
        """E[theta^k] for the physical parameter value."""
        m = self.distribution.raw_moment(k)
        if self.distribution.relative:
            return nominal**k * m
        return m

    def sample_theta(self, nominal: float, rng: np.random.Generator, size=None):
        x = self.distribution.sample(rng, size=size)
        return nominal * x if self.distribution.relative else x


def default_dipole_uncertainty(i: int, j: int, sigma: float = 0.05) -> UncertainParameter:
    """Multiplicative Gaussian dipole uncertainty, theta = mu_ij * N(1, sigma)."""
    return UncertainParameter(DipoleElement(i, j), ParameterDistribution.gaussian(1.0, sigma))


def default_amplitude_noise(k: int, sigma: float = 0.1) -> UncertainParameter:
    """Multiplicative Gaussian amplitude noise, A_k * N(1, sigma)."""
    return UncertainParameter(ModeAmplitude(k), ParameterDistribution.gaussian(1.0, sigma))
