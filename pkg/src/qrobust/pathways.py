"""Fourier encoding and decoding of parameter-resolved transition pathways.

A chosen subset of uncertain parameters is rotated, theta_k -> theta_k
exp(i f_k s), and the final transition amplitude is sampled over the
encoding variable s.  One inverse DFT then splits the amplitude into
monomial contributions indexed by an exponent vector (one power per
encoded parameter), which is everything the moment calculus needs.
"""
from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import engine
from .errors import DecodingError, ValidationError
from .propagation import (
    ObjectiveSpec,
    PropagationResult,
    TimeGrid,
    TransitionProbability,
    _default_grid,
    interaction_phases,
    objective_value,
    propagate,
)
from .system import (
    ControlField,
    DipoleElement,
    ModeAmplitude,
    ParameterTarget,
    QuantumSystem,
)

_SWEEP_CHUNK = 256
_MAX_POLYTOPES = 500_000


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def enumerate_polytopes(n_params: int, max_total_order: int) -> list[tuple[int, ...]]:
    """All exponent vectors with sum <= max_total_order, graded lexicographic."""
    count = math.comb(max_total_order + n_params, n_params)
    if count > _MAX_POLYTOPES:
        raise ValidationError(
            f"{count} exponent vectors exceed the enumeration limit; "
            "encode fewer parameters or lower max_total_order"
        )
    out = []
    for total in range(max_total_order + 1):
        for head in itertools.combinations_with_replacement(range(n_params), total):
            vec = [0] * n_params
            for idx in head:
                vec[idx] += 1
            out.append(tuple(vec))
    return out


@dataclass(frozen=True)
class EncodingScheme:
    """Subset encoding setup: targets, integer frequencies and DFT size.

    check_collisions=False builds a propagation-only scheme (for parity or
    sign-flip probes); decoding requires a collision-free scheme.
    """

    targets: tuple
    freqs: tuple
    n_samples: int
    max_total_order: int
    check_collisions: bool = True

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "freqs", tuple(int(f) for f in self.freqs))
        if len(self.targets) == 0:
            raise ValidationError("scheme needs at least one encoded target")
        if len(self.freqs) != len(self.targets):
            raise ValidationError("one encode frequency per target required")
        if any(f <= 0 for f in self.freqs):
            raise ValidationError("encode frequencies must be positive integers")
        if len(set(self.freqs)) != len(self.freqs):
            raise ValidationError("encode frequencies must be distinct")
        if self.max_total_order < 1:
            raise ValidationError("max_total_order must be >= 1")
        if self.check_collisions:
            self._verify_collision_free()

    @property
    def n_params(self) -> int:
        return len(self.targets)

    @classmethod
    def build(cls, targets: Sequence[ParameterTarget], max_total_order: int = 10,
              n_samples: Optional[int] = None) -> "EncodingScheme":
        """Collision-free scheme with base-(M+1) frequencies.

        f_k = (M+1)^(k-1) makes the admitted frequency sums the base-(M+1)
        digit expansions of the exponent vectors, hence all distinct.
        """
        base = max_total_order + 1
        freqs = tuple(base ** k for k in range(len(targets)))
        if n_samples is None:
            n_samples = _next_pow2(2 * max_total_order * freqs[-1] + 1)
        return cls(tuple(targets), freqs, n_samples, max_total_order)

    def _verify_collision_free(self):
        sums = np.array([self.frequency_of(p) for p in self.polytopes], dtype=np.int64)
        max_freq = int(sums.max())
        if self.n_samples <= 2 * max_freq:
            raise ValidationError(
                f"n_samples={self.n_samples} violates the sampling margin "
                f"(need > {2 * max_freq})"
            )
        mods = np.mod(sums, self.n_samples)
        if np.unique(mods).size != mods.size:
            raise ValidationError("encode frequency sums collide; choose new frequencies")

    @cached_property
    def polytopes(self) -> list[tuple[int, ...]]:
        return enumerate_polytopes(self.n_params, self.max_total_order)

    def frequency_of(self, powers: Sequence[int]) -> int:
        return int(sum(int(a) * f for a, f in zip(powers, self.freqs)))

    @cached_property
    def frequency_map(self) -> dict[int, tuple[int, ...]]:
        return {self.frequency_of(p): p for p in self.polytopes}

    def s_grid(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_samples) / self.n_samples

    def nominal_thetas(self, system: QuantumSystem, fld: ControlField) -> np.ndarray:
        vals = np.array([t.nominal(system, fld) for t in self.targets], dtype=float)
        if np.any(vals == 0):
            bad = [t.label() for t, v in zip(self.targets, vals) if v == 0]
            raise ValidationError(
                f"encoded targets with zero nominal value: {bad}; "
                "multiplicative pathway normalization is undefined"
            )
        return vals


def _encoded_arrays(system: QuantumSystem, fld: ControlField, scheme: EncodingScheme,
                    s_values: np.ndarray, grid: TimeGrid, radius: float = 1.0):
    """Per-s dipole matrices and complex field samples for a batch of s values."""
    scheme.nominal_thetas(system, fld)  # validates nonzero nominals
    n_s = s_values.size
    mus = np.broadcast_to(system.dipole.astype(complex), (n_s,) + system.dipole.shape).copy()
    amp_scale = np.ones((n_s, fld.n_modes), dtype=complex)
    for tgt, f in zip(scheme.targets, scheme.freqs):
        rot = radius * np.exp(1j * f * s_values)
        if isinstance(tgt, DipoleElement):
            mus[:, tgt.i, tgt.j] = system.dipole[tgt.i, tgt.j] * rot
            mus[:, tgt.j, tgt.i] = system.dipole[tgt.j, tgt.i] * rot
        elif isinstance(tgt, ModeAmplitude):
            if tgt.k >= fld.n_modes:
                raise ValidationError(f"mode index {tgt.k} out of range")
            amp_scale[:, tgt.k] = rot
        else:
            raise ValidationError(f"unsupported encoding target {tgt!r}")
    tm = grid.midpoints()
    cosines = np.cos(np.outer(tm, fld.frequencies) + fld.phases)  # (n_steps, K)
    eps = amp_scale @ (fld.amplitudes[:, None] * cosines.T)  # (n_s, n_steps)
    return mus, eps


def encoded_sweep(system: QuantumSystem, fld: ControlField, scheme: EncodingScheme,
                  grid: Optional[TimeGrid] = None,
                  s_values: Optional[np.ndarray] = None,
                  radius: float = 1.0) -> np.ndarray:
    """Interaction-picture U(T, s) for a batch of s values; (n_s, N, N).

    radius < 1 samples on a shrunk circle theta -> theta * radius * e^(ifs);
    the inverse DFT then unscales bins by radius^order, which damps content
    beyond the scheme's order cap without biasing the recovered coefficients
    (the amplitude is entire in the encoded parameters).
    """
    grid = _default_grid(fld, grid)
    if s_values is None:
        s_values = scheme.s_grid()
    s_values = np.atleast_1d(np.asarray(s_values, dtype=float))
    if not 0.0 < radius <= 1.0:
        raise ValidationError("encode radius must be in (0, 1]")
    phases = interaction_phases(system, grid.duration)
    out = np.empty((s_values.size,) + system.dipole.shape, dtype=complex)
    eps_max = float(np.sum(fld.amplitudes))
    for lo in range(0, s_values.size, _SWEEP_CHUNK):
        hi = min(lo + _SWEEP_CHUNK, s_values.size)
        mus, eps = _encoded_arrays(system, fld, scheme, s_values[lo:hi], grid, radius)
        u = engine.midpoint_batch(system.energies, mus, eps, grid.dt, eps_max=eps_max)
        out[lo:hi] = phases[None, :, None] * u
    return out


def encoded_propagate(system: QuantumSystem, fld: ControlField, scheme: EncodingScheme,
                      s: float, grid: Optional[TimeGrid] = None) -> np.ndarray:
    """U(T, s) with every encoded parameter rotated by exp(i f_k s).

    Interaction picture; equals propagate(...).interaction_final at s = 0.
    Not unitary for s != 0 because the rotated Hamiltonian is non-Hermitian.
    """
    return encoded_sweep(system, fld, scheme, grid, np.array([float(s)]))[0]


@dataclass(frozen=True)
class Pathway:
    """One monomial contribution to the encoded transition amplitude."""

    powers: tuple
    coeff: complex
    nominal_weight: float  # |coeff| * prod |theta_k|^powers_k

    @property
    def magnitude(self) -> float:
        return abs(self.coeff)

    @property
    def phase(self) -> float:
        return math.atan2(self.coeff.imag, self.coeff.real)

    @property
    def order(self) -> int:
        return int(sum(self.powers))


@dataclass(frozen=True)
class PathwayTable:
    """Decoded pathway set for one transition element plus context."""

    pathways: tuple
    scheme: EncodingScheme
    initial: int
    final: int
    nominal_thetas: np.ndarray
    nominal_amplitude: complex  # U(T)[final, initial] at s = 0, same grid
    retention_tol: float
    alias_ratio: float
    dropped_weight: float

    def __len__(self):
        return len(self.pathways)

    def reconstruct(self, thetas: Optional[np.ndarray] = None) -> complex:
        return reconstruct_amplitude(self, thetas)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("powers,re_coeff,im_coeff,magnitude,phase,order,nominal_weight\n")
        for p in self.pathways:
            pw = " ".join(str(a) for a in p.powers)
            buf.write(
                f"{pw},{p.coeff.real:.12g},{p.coeff.imag:.12g},"
                f"{p.magnitude:.12g},{p.phase:.12g},{p.order},{p.nominal_weight:.12g}\n"
            )
        return buf.getvalue()


def decode_pathways(system: QuantumSystem, fld: ControlField, scheme: EncodingScheme,
                    initial: int, final: int, retention_tol: float = 1e-4,
                    grid: Optional[TimeGrid] = None,
                    alias_tol: float = 0.05,
                    encode_radius: float = 1.0) -> PathwayTable:
    """Split U(T)[final, initial] into pathway coefficients by inverse DFT.

    Samples the encoded amplitude on the scheme's s grid, bins it by encode
    frequency, divides each admitted bin by its nominal parameter monomial
    and drops bins below retention_tol times the largest.  Energy found in
    non-admissible bins signals aliasing from orders beyond the scheme cap
    and raises DecodingError when it exceeds alias_tol relative; shrinking
    encode_radius below 1 damps that out-of-cap content geometrically.
    """
    if not scheme.check_collisions:
        raise DecodingError("decoding requires a collision-checked scheme")
    dim = system.dimension
    if not (0 <= initial < dim and 0 <= final < dim):
        raise ValidationError("transition indices out of range")
    grid = _default_grid(fld, grid)
    sweep = encoded_sweep(system, fld, scheme, grid, radius=encode_radius)
    samples = sweep[:, final, initial]
    bins = np.fft.fft(samples) / scheme.n_samples

    freq_map = scheme.frequency_map
    admitted = np.fromiter(freq_map.keys(), dtype=np.int64)
    mask = np.zeros(scheme.n_samples, dtype=bool)
    mask[admitted] = True
    peak = float(np.abs(bins).max())
    stray = float(np.abs(bins[~mask]).max()) if (~mask).any() else 0.0
    alias_ratio = stray / peak if peak > 0 else 0.0
    if alias_ratio > alias_tol:
        raise DecodingError(
            f"aliasing energy at {alias_ratio:.2%} of the peak bin; raise "
            "max_total_order or n_samples, or shrink encode_radius"
        )

    thetas = scheme.nominal_thetas(system, fld)
    cut = retention_tol * peak
    kept = []
    dropped = 0.0
    for freq, powers in freq_map.items():
        b = bins[freq]
        if abs(b) < cut:
            dropped += abs(b)
            continue
        order = sum(powers)
        unscaled = b / encode_radius**order
        monomial = float(np.prod(thetas ** np.array(powers)))
        kept.append(Pathway(powers, complex(unscaled / monomial), float(abs(unscaled))))
    kept.sort(key=lambda p: (-p.nominal_weight, p.powers))
    if encode_radius == 1.0:
        nominal_amp = complex(samples[0])
    else:
        eps0 = fld.sample_midpoints(grid.n_steps)
        u0 = engine.midpoint_single(system.energies, system.dipole, eps0, grid.dt)
        nominal_amp = complex(
            (interaction_phases(system, grid.duration)[:, None] * u0)[final, initial]
        )
    return PathwayTable(
        pathways=tuple(kept),
        scheme=scheme,
        initial=initial,
        final=final,
        nominal_thetas=thetas,
        nominal_amplitude=nominal_amp,
        retention_tol=retention_tol,
        alias_ratio=alias_ratio,
        dropped_weight=float(dropped),
    )


def reconstruct_amplitude(table: PathwayTable, thetas: Optional[np.ndarray] = None) -> complex:
    """Sum of coeff * prod theta^powers over the retained pathways."""
    if thetas is None:
        thetas = table.nominal_thetas
    thetas = np.asarray(thetas, dtype=float)
    if thetas.shape != (table.scheme.n_params,):
        raise ValidationError("theta vector length must match the encoded targets")
    total = 0.0 + 0.0j
    for p in table.pathways:
        total += p.coeff * np.prod(thetas ** np.array(p.powers))
    return complex(total)


@dataclass(frozen=True)
class ParameterSensitivity:
    target: ParameterTarget
    sensitivity: float
    mode: str  # "gradient" or "hessian"


def _objective_batch(system: QuantumSystem, fld: ControlField, objective: ObjectiveSpec,
                     grid: TimeGrid, mus: np.ndarray, eps: np.ndarray) -> np.ndarray:
    u = engine.midpoint_batch(system.energies, mus, eps, grid.dt)
    return np.array([objective.value(m) for m in u])


def _perturbed_eval(system, fld, objective, grid, targets, offsets):
    """J evaluated with each (target, offset) pair applied one at a time."""
    tm = grid.midpoints()
    cosines = np.cos(np.outer(tm, fld.frequencies) + fld.phases)
    eps0 = cosines @ fld.amplitudes
    mus = np.broadcast_to(system.dipole, (len(targets),) + system.dipole.shape).copy()
    eps = np.broadcast_to(eps0, (len(targets), tm.size)).copy()
    for row, (tgt, off) in enumerate(zip(targets, offsets)):
        if isinstance(tgt, DipoleElement):
            mus[row, tgt.i, tgt.j] += off
            mus[row, tgt.j, tgt.i] += off
        else:
            eps[row] += off * cosines[:, tgt.k]
    return _objective_batch(system, fld, objective, grid, mus, eps)


def default_candidates(system: QuantumSystem, fld: ControlField) -> list[ParameterTarget]:
    """Every nonzero coupling (i < j) plus every mode amplitude."""
    n = system.dimension
    cands: list[ParameterTarget] = [
        DipoleElement(i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if system.dipole[i, j] != 0
    ]
    cands.extend(ModeAmplitude(k) for k in range(fld.n_modes))
    return cands


def significant_parameters(
    system: QuantumSystem,
    fld: ControlField,
    objective: ObjectiveSpec,
    threshold: float,
    candidates: Optional[Sequence[ParameterTarget]] = None,
    grid: Optional[TimeGrid] = None,
    fd_step: float = 1e-4,
    critical_tol: float = 1e-4,
) -> list[ParameterSensitivity]:
    """Rank candidate parameters by |dJ/dtheta| central differences.

    Near a critical field (all first derivatives below critical_tol) the
    gradient carries no ranking information, so the second derivative
    (finite-difference Hessian diagonal) is used instead.
    """
    if threshold <= 0:
        raise ValidationError("threshold must be positive")
    grid = _default_grid(fld, grid)
    objective.validate(system.dimension)
    if candidates is None:
        candidates = default_candidates(system, fld)
    theta0 = np.array([t.nominal(system, fld) for t in candidates])
    steps = fd_step * np.maximum(np.abs(theta0), 0.1)

    plus = _perturbed_eval(system, fld, objective, grid, candidates, steps)
    minus = _perturbed_eval(system, fld, objective, grid, candidates, -steps)
    grads = (plus - minus) / (2.0 * steps)
    mode = "gradient"
    sens = np.abs(grads)
    if sens.max() < critical_tol:
        # landscape top: rank by curvature; wider step keeps the quotient above FD noise
        h2 = fd_step ** 0.5 * np.maximum(np.abs(theta0), 0.1)
        p2 = _perturbed_eval(system, fld, objective, grid, candidates, h2)
        m2 = _perturbed_eval(system, fld, objective, grid, candidates, -h2)
        j0 = objective_value(propagate(system, fld, grid), objective)
        sens = np.abs((p2 - 2.0 * j0 + m2) / h2**2)
        mode = "hessian"
    keep = sens >= threshold * sens.max()
    ranked = sorted(
        (ParameterSensitivity(t, float(s), mode) for t, s, k in zip(candidates, sens, keep) if k),
        key=lambda r: -r.sensitivity,
    )
    return ranked


@dataclass(frozen=True)
class HessianSpectrum:
    """Report of the objective curvature over the 2K field genes."""

    status: str  # "ok" or "skipped_not_critical"
    gradient_norm: float
    eigenvalues: Optional[np.ndarray]
    numerical_rank: Optional[int]
    rank_bound: int
    rank_tol: float

    @property
    def within_bound(self) -> Optional[bool]:
        if self.numerical_rank is None:
            return None
        return self.numerical_rank <= self.rank_bound


def hessian_rank_check(
    system: QuantumSystem,
    fld: ControlField,
    objective: ObjectiveSpec,
    grid: Optional[TimeGrid] = None,
    critical_tol: float = 1e-2,
    rank_tol: float = 1e-2,
    fd_step: float = 1e-3,
) -> HessianSpectrum:
    """Finite-difference gene-space Hessian spectrum at a near-critical field.

    At the top of the state-transfer landscape the curvature has rank at
    most 2N - 2, so the count of eigenvalues above rank_tol (relative to the
    largest magnitude) must not exceed that bound.  Away from criticality
    the check is skipped with an explanatory status.
    """
    grid = _default_grid(fld, grid)
    objective.validate(system.dimension)
    genes0 = np.concatenate([fld.frequencies, fld.phases])
    amps = fld.amplitudes
    k = fld.n_modes
    tm = grid.midpoints()

    def eps_for(genes_rows):
        g = np.asarray(genes_rows)
        return (amps * np.cos(g[:, None, :k] * tm[None, :, None] + g[:, None, k:])).sum(axis=2)

    def j_batch(genes_rows):
        eps = eps_for(genes_rows)
        u = engine.midpoint_batch(system.energies, system.dipole, eps, grid.dt)
        return np.array([objective.value(m) for m in u])

    n_g = genes0.size
    rank_bound = 2 * system.dimension - 2
    h = fd_step

    gplus = genes0 + h * np.eye(n_g)
    gminus = genes0 - h * np.eye(n_g)
    jp = j_batch(gplus)
    jm = j_batch(gminus)
    grad_norm = float(np.abs((jp - jm) / (2 * h)).max())
    if grad_norm > critical_tol:
        return HessianSpectrum("skipped_not_critical", grad_norm, None, None, rank_bound, rank_tol)

    j0 = j_batch(genes0[None])[0]
    hess = np.empty((n_g, n_g))
    rows = []
    for a in range(n_g):
        hess[a, a] = (jp[a] - 2 * j0 + jm[a]) / h**2
        for b in range(a + 1, n_g):
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                g = genes0.copy()
                g[a] += sa * h
                g[b] += sb * h
                rows.append(g)
    if rows:
        vals = j_batch(np.array(rows))
        idx = 0
        for a in range(n_g):
            for b in range(a + 1, n_g):
                hpp, hpm, hmp, hmm = vals[idx : idx + 4]
                idx += 4
                hess[a, b] = hess[b, a] = (hpp - hpm - hmp + hmm) / (4 * h**2)
    eigvals = np.linalg.eigvalsh(hess)
    scale = float(np.abs(eigvals).max())
    rank = int(np.sum(np.abs(eigvals) >= rank_tol * scale)) if scale > 0 else 0
    return HessianSpectrum("ok", grad_norm, eigvals, rank, rank_bound, rank_tol)
