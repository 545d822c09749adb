"""First-order optimality machinery: costates, gradient traces and their
expectation under encoded Hamiltonian uncertainty.

The gradient of a final-time objective with respect to the field value in
grid bin q follows from the first-order variation
dU(T) = U(T) * (i int U^dag(t) mu U(t) deps(t) dt), giving

    dJ/deps(t) = Re{ i Tr[ G^dag U(T) U^dag(t) mu U(t) ] } = -Im Tr[Phi(t)^dag mu U(t)]

with Phi(t) = U(t) U(T)^dag G the costate and G the terminal gradient
matrix paired as dF = Re Tr[G^dag dU].  Traces are evaluated at bin
midpoints, matching a midpoint-integrator bump probe.

Expected gradients reuse the pathway encoding: the per-s trace z(t, s) is
an entire series in the encoded parameters whose s-DFT bins carry one
parameter monomial each, so reweighting each bin by E[theta^a]/theta^a and
summing yields the gradient of E[J] (Hamiltonian uncertainty only; field
noise optimality conditions are out of scope).
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import engine
from .errors import DecodingError, ValidationError
from .moments import MomentSpec
from .pathways import EncodingScheme, _encoded_arrays
from .propagation import (
    GateDistance,
    ObservableExpectation,
    ObjectiveSpec,
    TimeGrid,
    TransitionProbability,
    _default_grid,
    interaction_phases,
)
from .system import ControlField, DipoleElement, QuantumSystem

#: residual below which a gradient-polished field counts as first-order optimal
POLISHED_RESIDUAL_TOL = 1e-3
#: looser certification bar for raw GA outputs, which are not gradient converged
GA_RESIDUAL_TOL = 5e-2


def _projector_pair(objective: TransitionProbability, dim: int):
    rho0 = np.zeros((dim, dim), dtype=complex)
    rho0[objective.initial, objective.initial] = 1.0
    theta = np.zeros((dim, dim), dtype=complex)
    theta[objective.final, objective.final] = 1.0
    return rho0, theta


def terminal_gradient(objective: ObjectiveSpec, u_final: np.ndarray,
                      unitarity_tol: float = 1e-6) -> np.ndarray:
    """Terminal gradient matrix G with the pairing dF = Re Tr[G^dag dU].

    Observable F = Tr[U rho0 U^dag Theta]:  G = U [U^dag Theta U, rho0],
    which vanishes exactly when Theta commutes with U rho0 U^dag.
    Gate F = |U - W|^2:  G = U W^dag U - W.
    Both reproduce directional derivatives along unitary perturbations
    U -> U exp(i d h) for Hermitian h.
    """
    u = np.asarray(u_final, dtype=complex)
    dim = u.shape[0]
    res = float(np.abs(u.conj().T @ u - np.eye(dim)).max())
    if res > unitarity_tol:
        raise ValidationError(f"terminal U is not unitary (residual {res:.2e})")
    if isinstance(objective, TransitionProbability):
        objective.validate(dim)
        rho0, theta = _projector_pair(objective, dim)
        objective = ObservableExpectation(rho0, theta)
    if isinstance(objective, ObservableExpectation):
        objective.validate(dim)
        b = u.conj().T @ objective.theta @ u
        comm = b @ objective.rho0 - objective.rho0 @ b
        return u @ comm
    if isinstance(objective, GateDistance):
        objective.validate(dim)
        w = objective.target
        return u @ w.conj().T @ u - w
    raise ValidationError(f"unsupported objective {objective!r}")


@dataclass(frozen=True)
class CostateTrajectory:
    """Backward-consistent costate Phi(t) = U(t) U(T)^dag Phi(T) on the grid."""

    times: np.ndarray
    matrices: np.ndarray  # (n_steps + 1, N, N)
    terminal: np.ndarray

    def consistency_residual(self, trajectory: np.ndarray) -> float:
        """Max deviation of Phi(t) from U(t) U(T)^dag Phi(T) given U(t)."""
        u_t = trajectory[-1]
        ref = np.einsum("qij,jk->qik", trajectory, u_t.conj().T @ self.terminal)
        return float(np.abs(ref - self.matrices).max())


@dataclass(frozen=True)
class GradientTrace:
    """dJ/deps(t) (or dE[J]/deps(t)) sampled at the grid bin midpoints."""

    times: np.ndarray
    values: np.ndarray
    objective_tag: str

    def __post_init__(self):
        if self.times.shape != self.values.shape:
            raise ValidationError("times/values shape mismatch")

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,gradient\n")
        for t, g in zip(self.times, self.values):
            buf.write(f"{t:.12g},{g:.15g}\n")
        return buf.getvalue()


def pmp_residual(trace: GradientTrace) -> float:
    """Sup norm of the trace; first-order optimality holds when it is small."""
    return trace.sup_norm


def _midpoint_states(h0diag, mu, eps_mid, dt, trajectory):
    """U at bin midpoints from the stored step-point trajectory."""
    half = engine.midpoint_batch(h0diag, mu, np.asarray(eps_mid)[:, None], dt / 2.0)
    return np.einsum("qij,qjk->qik", half, trajectory[:-1])


def costate_trajectory(system: QuantumSystem, fld: ControlField,
                       objective: ObjectiveSpec,
                       grid: Optional[TimeGrid] = None) -> CostateTrajectory:
    """Forward-propagated costate with terminal condition Phi(T) = G."""
    grid = _default_grid(fld, grid)
    eps = fld.sample_midpoints(grid.n_steps)
    traj = engine.midpoint_trajectory(system.energies, system.dipole, eps, grid.dt)
    g = terminal_gradient(objective, traj[-1])
    phi = np.einsum("qij,jk->qik", traj, traj[-1].conj().T @ g)
    return CostateTrajectory(grid.points(), phi, g)


def nominal_gradient(system: QuantumSystem, fld: ControlField,
                     objective: ObjectiveSpec,
                     grid: Optional[TimeGrid] = None) -> GradientTrace:
    """Gradient trace of the nominal objective over the time grid."""
    grid = _default_grid(fld, grid)
    eps = fld.sample_midpoints(grid.n_steps)
    traj = engine.midpoint_trajectory(system.energies, system.dipole, eps, grid.dt)
    g = terminal_gradient(objective, traj[-1])
    u_mid = _midpoint_states(system.energies, system.dipole, eps, grid.dt, traj)
    m_t = np.einsum("qai,ab,qbj->qij", u_mid.conj(), system.dipole.astype(complex), u_mid)
    k = g.conj().T @ traj[-1]
    z = np.einsum("ab,qba->q", k, m_t)
    return GradientTrace(grid.midpoints(), -z.imag, _objective_tag(objective))


def _objective_tag(objective) -> str:
    return type(objective).__name__


def _continued_trace(system, objective, grid, mus_s, eps_s, mus_neg, eps_neg):
    """z(t, s) = Tr[K(s) M_t(s)] with conjugate factors continued via -s."""
    h0 = system.energies
    dt = grid.dt
    traj = engine.midpoint_trajectory(h0, mus_s, eps_s, dt)
    traj_n = engine.midpoint_trajectory(h0, mus_neg, eps_neg, dt)
    u_mid = _midpoint_states(h0, mus_s, eps_s, dt, traj)
    u_mid_n = _midpoint_states(h0, mus_neg, eps_neg, dt, traj_n)
    v_mid = np.conj(np.swapaxes(u_mid_n, 1, 2))  # continued U^dag at midpoints
    u_t, u_t_n = traj[-1], traj_n[-1]
    v_t = np.conj(u_t_n.T)
    dim = system.dimension
    if isinstance(objective, TransitionProbability):
        rho0, theta = _projector_pair(objective, dim)
    elif isinstance(objective, ObservableExpectation):
        rho0, theta = objective.rho0, objective.theta
    elif isinstance(objective, GateDistance):
        rho0 = theta = None
    else:
        raise ValidationError(f"unsupported objective {objective!r}")
    if rho0 is not None:
        b = v_t @ theta @ u_t
        k = rho0 @ b - b @ rho0  # K = G^dag U(T) = [rho0, B], continued
    else:
        w = objective.target
        k = v_t @ w - w.conj().T @ u_t
    m_t = np.einsum("qia,ab,qbj->qij", v_mid, mus_s, u_mid)
    return np.einsum("ab,qba->q", k, m_t)


def expected_gradient(system: QuantumSystem, fld: ControlField, scheme: EncodingScheme,
                      spec: MomentSpec, objective: ObjectiveSpec,
                      grid: Optional[TimeGrid] = None,
                      encode_radius: float = 1.0,
                      alias_tol: float = 0.05) -> GradientTrace:
    """Gradient trace of E[J] under encoded dipole uncertainty.

    Runs the nominal-gradient trace machinery on the encoded dynamics over
    the scheme's s grid, projects the per-s traces onto the admitted encode
    frequencies by DFT and reweights each component by its parameter moment
    ratio E[theta^a]/theta^a.  The scheme's max_total_order caps the summed
    exponent of the reweighted monomials (pairs of amplitude orders), so it
    should be roughly twice the cap used for amplitude decoding.
    """
    grid = _default_grid(fld, grid)
    if not scheme.check_collisions:
        raise DecodingError("expected_gradient requires a collision-checked scheme")
    for t in scheme.targets:
        if not isinstance(t, DipoleElement):
            raise ValidationError(
                "expected_gradient handles Hamiltonian (dipole) uncertainty only; "
                "field-noise optimality conditions are not implemented"
            )
    if spec.n_params != scheme.n_params:
        raise ValidationError("spec/scheme parameter count mismatch")
    for p, t in zip(spec.parameters, scheme.targets):
        if p.target != t:
            raise ValidationError("spec parameters must align with encoded targets")

    n_s = scheme.n_samples
    s_vals = scheme.s_grid()
    mus_all, eps_all = _encoded_arrays(system, fld, scheme, s_vals, grid, encode_radius)
    n_t = grid.n_steps
    z = np.empty((n_s, n_t), dtype=complex)
    for q in range(n_s):
        qn = (-q) % n_s
        z[q] = _continued_trace(
            system, objective, grid, mus_all[q], eps_all[q], mus_all[qn], eps_all[qn]
        )
    bins = np.fft.fft(z, axis=0) / n_s  # (n_s, n_t)

    freq_map = scheme.frequency_map
    mask = np.zeros(n_s, dtype=bool)
    mask[list(freq_map.keys())] = True
    peak = float(np.abs(bins).max())
    stray = float(np.abs(bins[~mask]).max()) if (~mask).any() else 0.0
    if peak > 0 and stray / peak > alias_tol:
        raise DecodingError(
            f"aliasing energy at {stray / peak:.2%} of the peak gradient bin; "
            "raise max_total_order or shrink encode_radius"
        )

    nominals = scheme.nominal_thetas(system, fld)
    total = np.zeros(n_t, dtype=complex)
    for freq, powers in freq_map.items():
        order = sum(powers)
        ratio = 1.0
        for p, nom, a in zip(spec.parameters, nominals, powers):
            if a:
                ratio *= p.theta_moment(a, nom) / nom**a
        total += bins[freq] * (ratio / encode_radius**order)
    return GradientTrace(grid.midpoints(), -total.imag, "expected_" + _objective_tag(objective))
