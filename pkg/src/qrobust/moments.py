"""Objective moments from pathway coefficients, interference breakdowns,
Monte-Carlo estimation with calibrated draw counts, and leading-order
Taylor comparisons.

All parameters are treated as statistically independent, so joint raw
moments factor into per-parameter closed forms.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import norm

from . import engine
from .errors import ValidationError
from .pathways import PathwayTable
from .propagation import (
    ObjectiveSpec,
    TimeGrid,
    TransitionProbability,
    _default_grid,
    objective_value,
    propagate,
)
from .system import (
    ControlField,
    DipoleElement,
    ModeAmplitude,
    QuantumSystem,
    UncertainParameter,
)


@dataclass(frozen=True)
class MomentSpec:
    """Uncertainty laws aligned index-by-index with an encoded target list."""

    parameters: tuple

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(self.parameters))
        if not self.parameters:
            raise ValidationError("MomentSpec needs at least one parameter")
        for p in self.parameters:
            if not isinstance(p, UncertainParameter):
                raise ValidationError("MomentSpec entries must be UncertainParameter")

    @property
    def n_params(self) -> int:
        return len(self.parameters)

    def validate_alignment(self, table: PathwayTable):
        if self.n_params != table.scheme.n_params:
            raise ValidationError("spec/table parameter count mismatch")
        for p, t in zip(self.parameters, table.scheme.targets):
            if p.target != t:
                raise ValidationError(
                    f"spec parameter {p.target!r} does not match encoded target {t!r}"
                )

    def is_point_mass(self) -> bool:
        return all(p.distribution.is_point_mass for p in self.parameters)


def _moment_matrix(spec: MomentSpec, nominals: np.ndarray, max_order: int) -> np.ndarray:
    """mom[k, m] = E[theta_k^m] for m = 0..max_order."""
    out = np.empty((spec.n_params, max_order + 1))
    for k, (p, nom) in enumerate(zip(spec.parameters, nominals)):
        for m in range(max_order + 1):
            out[k, m] = p.theta_moment(m, nom)
    return out


@dataclass(frozen=True)
class InterferenceBreakdown:
    """Pairwise pathway interference under nominal and expected weights.

    Terms are 2 A A' cos(phase difference) times either the nominal monomial
    or its expectation; the polar histogram bins term magnitudes by phase
    difference over [-pi, pi].
    """

    pair_angles: np.ndarray
    pair_nominal: np.ndarray
    pair_expected: np.ndarray
    direct_nominal: float
    direct_expected: float
    bin_edges: np.ndarray
    bin_nominal_magnitude: np.ndarray
    bin_expected_magnitude: np.ndarray

    @property
    def nominal_sum(self) -> float:
        return float(self.pair_nominal.sum())

    @property
    def expected_sum(self) -> float:
        return float(self.pair_expected.sum())

    @property
    def constructive_nominal(self) -> float:
        return float(self.pair_nominal[self.pair_nominal > 0].sum())

    @property
    def destructive_nominal(self) -> float:
        return float(self.pair_nominal[self.pair_nominal < 0].sum())

    @property
    def constructive_expected(self) -> float:
        return float(self.pair_expected[self.pair_expected > 0].sum())

    @property
    def destructive_expected(self) -> float:
        return float(self.pair_expected[self.pair_expected < 0].sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("bin_center,nominal_magnitude,expected_magnitude,constructive_flag\n")
        centers = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        for c, nm, em in zip(centers, self.bin_nominal_magnitude, self.bin_expected_magnitude):
            buf.write(f"{c:.12g},{nm:.12g},{em:.12g},{int(math.cos(c) > 0)}\n")
        return buf.getvalue()


@dataclass(frozen=True)
class McEstimate:
    """Sample statistics of the objective under parameter draws."""

    mean: float
    variance: float
    std_error_mean: float
    std_error_variance: float
    n_samples: int
    seed: int

    def halfwidth(self, confidence: float = 0.95) -> float:
        return float(norm.ppf(0.5 + confidence / 2.0) * self.std_error_mean)


@dataclass
class RobustnessReport:
    """Asymptotic moments of one transition amplitude and probability."""

    expected_amplitude: complex
    variance_re: float
    variance_im: float
    expected_probability: float
    nominal_probability: float
    truncation_budget: float
    clipped: bool
    variance_probability: Optional[float] = None
    variance_probability_se: Optional[float] = None
    mc_samples: Optional[int] = None
    interference: Optional[InterferenceBreakdown] = None

    def attach_mc(self, est: McEstimate):
        self.variance_probability = est.variance
        self.variance_probability_se = est.std_error_variance
        self.mc_samples = est.n_samples

    def to_json(self, indent: int = 2) -> str:
        payload = {
            "expected_amplitude": {
                "re": self.expected_amplitude.real,
                "im": self.expected_amplitude.imag,
            },
            "variance_re": self.variance_re,
            "variance_im": self.variance_im,
            "expected_probability": self.expected_probability,
            "nominal_probability": self.nominal_probability,
            "truncation_budget": self.truncation_budget,
            "clipped": self.clipped,
            "variance_probability": self.variance_probability,
            "variance_probability_se": self.variance_probability_se,
            "mc_samples": self.mc_samples,
        }
        if self.interference is not None:
            payload["interference"] = {
                "nominal_sum": self.interference.nominal_sum,
                "expected_sum": self.interference.expected_sum,
                "constructive_nominal": self.interference.constructive_nominal,
                "destructive_nominal": self.interference.destructive_nominal,
                "constructive_expected": self.interference.constructive_expected,
                "destructive_expected": self.interference.destructive_expected,
            }
        return json.dumps(payload, indent=indent)


def _pathway_arrays(table: PathwayTable):
    powers = np.array([p.powers for p in table.pathways], dtype=np.int64)
    coeffs = np.array([p.coeff for p in table.pathways], dtype=complex)
    return powers, coeffs


def asymptotic_moments(table: PathwayTable, spec: MomentSpec) -> RobustnessReport:
    """Exact moments of the retained pathway sum under the given laws.

    E[U] = sum_a c_a prod_k E[theta_k^a_k]
    var(Re U), var(Im U) carry the full diagonal-plus-cross covariance of
    the real monomials, and E[P] = E[|sum_a c_a theta^a|^2] expanded the
    same way.  The probability variance is left for Monte Carlo.
    """
    spec.validate_alignment(table)
    if len(table.pathways) == 0:
        raise ValidationError("pathway table is empty")
    powers, coeffs = _pathway_arrays(table)
    nominals = table.nominal_thetas
    max_order = 2 * int(powers.sum(axis=1).max())
    mom = _moment_matrix(spec, nominals, max_order)

    n_path = powers.shape[0]
    k_idx = np.arange(spec.n_params)
    # first moments of each monomial: prod_k E[theta_k^a_k]
    m1 = np.prod(mom[k_idx[None, :], powers], axis=1)
    expected_amp = complex(np.sum(coeffs * m1))

    # pair moments: prod_k E[theta_k^(a_k + a'_k)]  (independence)
    pair_pow = powers[:, None, :] + powers[None, :, :]
    m2 = np.prod(mom[k_idx[None, None, :], pair_pow], axis=2)
    cov = m2 - np.outer(m1, m1)  # Cov[theta^a, theta^a']

    re_c, im_c = coeffs.real, coeffs.imag
    variance_re = float(re_c @ cov @ re_c)
    variance_im = float(im_c @ cov @ im_c)

    quad = np.outer(coeffs, coeffs.conj()).real * m2
    expected_p = float(quad.sum())

    nominal_amp = table.reconstruct()
    nominal_p = float(abs(nominal_amp) ** 2)
    clipped = expected_p > 1.0 + 1e-3
    return RobustnessReport(
        expected_amplitude=expected_amp,
        variance_re=max(variance_re, 0.0),
        variance_im=max(variance_im, 0.0),
        expected_probability=expected_p,
        nominal_probability=nominal_p,
        truncation_budget=10.0 * table.retention_tol,
        clipped=clipped,
    )


def interference_breakdown(table: PathwayTable, spec: Optional[MomentSpec],
                           n_bins: int = 12) -> InterferenceBreakdown:
    """Pairwise interference terms and their polar histogram.

    With spec=None the expected weights equal the nominal ones.
    """
    if n_bins < 2:
        raise ValidationError("n_bins must be >= 2")
    if spec is not None:
        spec.validate_alignment(table)
    powers, coeffs = _pathway_arrays(table)
    nominals = table.nominal_thetas
    mags = np.abs(coeffs)
    phases = np.angle(coeffs)
    max_order = 2 * int(powers.sum(axis=1).max())
    if spec is None:
        mom = nominals[:, None] ** np.arange(max_order + 1)[None, :]
    else:
        mom = _moment_matrix(spec, nominals, max_order)
    k_idx = np.arange(powers.shape[1])

    nom_monomial = nominals[None, :] ** powers
    nom1 = np.prod(nom_monomial, axis=1)

    iu = np.triu_indices(len(coeffs), k=1)
    pair_pow = powers[iu[0]] + powers[iu[1]]
    nom_pair = np.prod(nominals[None, :] ** pair_pow, axis=1)
    exp_pair = np.prod(mom[k_idx[None, :], pair_pow], axis=1)
    dphi = phases[iu[0]] - phases[iu[1]]
    base = 2.0 * mags[iu[0]] * mags[iu[1]] * np.cos(dphi)
    pair_nominal = base * nom_pair
    pair_expected = base * exp_pair

    diag2 = np.prod(mom[k_idx[None, :], 2 * powers], axis=1)
    direct_nominal = float(np.sum(mags**2 * nom1**2))
    direct_expected = float(np.sum(mags**2 * diag2))

    angles = np.mod(dphi + np.pi, 2.0 * np.pi) - np.pi
    edges = np.linspace(-np.pi, np.pi, n_bins + 1)
    which = np.clip(np.digitize(angles, edges) - 1, 0, n_bins - 1)
    bin_nom = np.zeros(n_bins)
    bin_exp = np.zeros(n_bins)
    np.add.at(bin_nom, which, np.abs(pair_nominal))
    np.add.at(bin_exp, which, np.abs(pair_expected))
    return InterferenceBreakdown(
        pair_angles=angles,
        pair_nominal=pair_nominal,
        pair_expected=pair_expected,
        direct_nominal=direct_nominal,
        direct_expected=direct_expected,
        bin_edges=edges,
        bin_nominal_magnitude=bin_nom,
        bin_expected_magnitude=bin_exp,
    )


DEFAULT_MC_BASE_STEPS = 250


def _draw_thetas(spec: MomentSpec, system: QuantumSystem, fld: ControlField,
                 n_samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    draws = np.empty((n_samples, spec.n_params))
    for k, p in enumerate(spec.parameters):
        nom = p.nominal(system, fld)
        draws[:, k] = p.sample_theta(nom, rng, size=n_samples)
    return draws


def _apply_draws(spec: MomentSpec, system: QuantumSystem, fld: ControlField,
                 thetas: np.ndarray):
    """Per-draw dipole matrices and amplitude vectors implied by theta draws."""
    n = thetas.shape[0]
    mus = np.broadcast_to(system.dipole, (n,) + system.dipole.shape).copy()
    amps = np.broadcast_to(fld.amplitudes, (n, fld.n_modes)).copy()
    for k, p in enumerate(spec.parameters):
        t = p.target
        if isinstance(t, DipoleElement):
            mus[:, t.i, t.j] = thetas[:, k]
            mus[:, t.j, t.i] = thetas[:, k]
        elif isinstance(t, ModeAmplitude):
            amps[:, t.k] = thetas[:, k]
        else:
            raise ValidationError(f"unsupported target {t!r}")
    return mus, amps


def probability_samples(system: QuantumSystem, fld: ControlField, spec: MomentSpec,
                        objective: TransitionProbability, n_samples: int, seed: int,
                        base_steps: int = DEFAULT_MC_BASE_STEPS,
                        chunk: int = 32768) -> np.ndarray:
    """Exact re-propagated objective values for independent parameter draws.

    Each draw runs a step-doubled Strang pair extrapolated to O(dt^4), so the
    integrator bias is far below sampling noise at default settings.
    """
    objective.validate(system.dimension)
    thetas = _draw_thetas(spec, system, fld, n_samples, seed)
    out = np.empty(n_samples)
    amp_targets = [k for k, p in enumerate(spec.parameters) if isinstance(p.target, ModeAmplitude)]
    for lo in range(0, n_samples, chunk):
        hi = min(lo + chunk, n_samples)
        mus, amps = _apply_draws(spec, system, fld, thetas[lo:hi])
        if amp_targets:
            u = _strang_richardson_amp(system, fld, mus, amps, base_steps)
        else:
            u = engine.strang_richardson(system.energies, mus, fld, base_steps)
        out[lo:hi] = np.abs(u[:, objective.final, objective.initial]) ** 2
    return out


def _strang_richardson_amp(system, fld, mus, amps, base_steps):
    """Richardson pair when the draws also perturb mode amplitudes."""
    results = []
    for n in (base_steps, 2 * base_steps):
        dt = fld.duration / n
        tm = (np.arange(n) + 0.5) * dt
        cosines = np.cos(np.outer(tm, fld.frequencies) + fld.phases)  # (n, K)
        eps = amps @ cosines.T
        fac = engine.strang_factors(system.energies, mus, dt)
        results.append(engine.strang_batch(fac, eps, dt))
    return (4.0 * results[1] - results[0]) / 3.0


def mc_estimate(system: QuantumSystem, fld: ControlField, spec: MomentSpec,
                objective: TransitionProbability, n_samples: int, seed: int,
                base_steps: int = DEFAULT_MC_BASE_STEPS) -> McEstimate:
    """Unbiased sample mean and variance of the exactly re-propagated objective.

    Deterministic given the seed; draws and reductions are ordered
    independently of thread count.
    """
    if n_samples < 2:
        raise ValidationError("mc_estimate needs n_samples >= 2")
    vals = probability_samples(system, fld, spec, objective, n_samples, seed, base_steps)
    mean = float(vals.mean())
    var = float(vals.var(ddof=1))
    se_mean = math.sqrt(var / n_samples)
    # std error of the sample variance via the fourth central moment
    m4 = float(np.mean((vals - mean) ** 4))
    se_var = math.sqrt(max(m4 - var**2 * (n_samples - 3) / (n_samples - 1), 0.0) / n_samples)
    return McEstimate(mean, var, se_mean, se_var, n_samples, seed)


def calibrate_samples(target_halfwidth: float, variance_estimate: float,
                      confidence: float = 0.95, minimum: int = 16) -> int:
    """Draw count for the mean to land within target_halfwidth at confidence.

    n = ceil((z sqrt(var) / halfwidth)^2), floored at `minimum`.
    """
    if target_halfwidth <= 0:
        raise ValidationError("target_halfwidth must be positive")
    if not 0 < confidence < 1:
        raise ValidationError("confidence must be in (0, 1)")
    if variance_estimate <= 0:
        return minimum
    z = norm.ppf(0.5 + confidence / 2.0)
    return max(minimum, int(math.ceil((z * math.sqrt(variance_estimate) / target_halfwidth) ** 2)))


@dataclass(frozen=True)
class LeadingOrderReport:
    """First/second-order Taylor moment approximations for comparison."""

    first_order_e_shift: float
    second_order_e_shift: float
    first_order_variance: float
    gradient: np.ndarray
    hessian_diag: np.ndarray


def taylor_moments(fn: Callable[[np.ndarray], float], theta0: np.ndarray,
                   means: np.ndarray, variances: np.ndarray,
                   fd_step: float = 1e-4) -> LeadingOrderReport:
    """Leading-order moment approximations of fn(theta) by finite differences.

    first_order_e_shift = grad . (E[theta] - theta0); exactly zero when every
    law is centered on the nominal value.  second_order_e_shift adds
    (1/2) sum_k H_kk var_k, and the first-order variance is the delta-method
    sum of squared gradients times variances (independent parameters).
    """
    theta0 = np.asarray(theta0, dtype=float)
    steps = fd_step * np.maximum(np.abs(theta0), 1.0)
    grad = np.empty_like(theta0)
    hdiag = np.empty_like(theta0)
    f0 = fn(theta0)
    for k in range(theta0.size):
        tp = theta0.copy()
        tp[k] += steps[k]
        tm = theta0.copy()
        tm[k] -= steps[k]
        fp, fm = fn(tp), fn(tm)
        grad[k] = (fp - fm) / (2 * steps[k])
        hdiag[k] = (fp - 2 * f0 + fm) / steps[k] ** 2
    shift1 = float(grad @ (means - theta0))
    shift2 = shift1 + 0.5 * float(hdiag @ variances)
    var1 = float((grad**2) @ variances)
    return LeadingOrderReport(shift1, shift2, var1, grad, hdiag)


def leading_order_moments(system: QuantumSystem, fld: ControlField, spec: MomentSpec,
                          objective: ObjectiveSpec, grid: Optional[TimeGrid] = None,
                          fd_step: float = 1e-4) -> LeadingOrderReport:
    """Leading-order Taylor moments of the objective over the spec parameters.

    Centered laws (Gaussian or any law with E[theta] = nominal) give a first
    order expectation shift of exactly zero, which is reported as such
    rather than re-derived through finite differences.
    """
    grid = _default_grid(fld, grid)
    objective.validate(system.dimension)
    nominals = np.array([p.nominal(system, fld) for p in spec.parameters])
    means = np.array([p.theta_moment(1, nom) for p, nom in zip(spec.parameters, nominals)])
    seconds = np.array([p.theta_moment(2, nom) for p, nom in zip(spec.parameters, nominals)])
    variances = seconds - means**2

    def fn(thetas):
        mus, amps = _apply_draws(spec, system, fld, thetas[None, :])
        tm = grid.midpoints()
        eps = amps @ np.cos(np.outer(tm, fld.frequencies) + fld.phases).T
        u = engine.midpoint_batch(system.energies, mus, eps, grid.dt)[0]
        return objective.value(u)

    rep = taylor_moments(fn, nominals, means, variances, fd_step)
    if np.allclose(means, nominals, rtol=0, atol=1e-15):
        rep = LeadingOrderReport(
            0.0, rep.second_order_e_shift - rep.first_order_e_shift,
            rep.first_order_variance, rep.gradient, rep.hessian_diag,
        )
    return rep
