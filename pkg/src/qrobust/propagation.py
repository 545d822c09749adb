"""Schrodinger/interaction-picture propagation, objectives and Dyson orders."""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import engine
from .errors import IntegrationError, ValidationError
from .system import Chromosome, ControlField, QuantumSystem

DEFAULT_DT = 0.01
DEFAULT_UNITARITY_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform integration grid over [0, duration]."""

    n_steps: int
    duration: float

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValidationError("n_steps must be >= 1")
        if not self.duration > 0:
            raise ValidationError("duration must be positive")

    @property
    def dt(self) -> float:
        return self.duration / self.n_steps

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) * self.dt

    def points(self) -> np.ndarray:
        return np.linspace(0.0, self.duration, self.n_steps + 1)

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.n_steps * factor, self.duration)

    @classmethod
    def for_duration(cls, duration: float, dt_target: float = DEFAULT_DT) -> "TimeGrid":
        return cls(max(1, int(round(duration / dt_target))), duration)


def _default_grid(fld: ControlField, grid: Optional[TimeGrid]) -> TimeGrid:
    if grid is None:
        return TimeGrid.for_duration(fld.duration)
    if abs(grid.duration - fld.duration) > 1e-12 * max(1.0, fld.duration):
        raise ValidationError("grid duration must match the field duration")
    return grid


def _check_hermitian(name: str, m: np.ndarray):
    m = np.asarray(m, dtype=complex)
    scale = max(1.0, float(np.abs(m).max()))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be a square matrix")
    if np.abs(m - m.conj().T).max() > 1e-12 * scale:
        raise ValidationError(f"{name} must be Hermitian")
    return m


@dataclass(frozen=True)
class TransitionProbability:
    """P = |U[final, initial]|^2 for 0-based state indices."""

    initial: int
    final: int

    def validate(self, dim: int):
        for idx in (self.initial, self.final):
            if not 0 <= idx < dim:
                raise ValidationError(f"state index {idx} out of range for N={dim}")

    def value(self, u: np.ndarray) -> float:
        return float(abs(u[self.final, self.initial]) ** 2)


@dataclass(frozen=True)
class ObservableExpectation:
    """Tr[U rho0 U^dag Theta] with Hermitian rho0 and Theta."""

    rho0: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rho0", _check_hermitian("rho0", self.rho0))
        object.__setattr__(self, "theta", _check_hermitian("Theta", self.theta))

    def validate(self, dim: int):
        if self.rho0.shape != (dim, dim) or self.theta.shape != (dim, dim):
            raise ValidationError("rho0/Theta dimension mismatch")

    def value(self, u: np.ndarray) -> float:
        val = np.trace(u @ self.rho0 @ u.conj().T @ self.theta)
        if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
            raise ValidationError("observable expectation is not real; check inputs")
        return float(val.real)


@dataclass(frozen=True)
class GateDistance:
    """Squared Frobenius distance |U - W|^2 to a target unitary W."""

    target: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.target, dtype=complex)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValidationError("gate target must be square")
        if np.abs(w.conj().T @ w - np.eye(w.shape[0])).max() > 1e-9:
            raise ValidationError("gate target must be unitary")
        object.__setattr__(self, "target", w)

    def validate(self, dim: int):
        if self.target.shape != (dim, dim):
            raise ValidationError("gate target dimension mismatch")

    def value(self, u: np.ndarray) -> float:
        return float(np.sum(np.abs(u - self.target) ** 2))


ObjectiveSpec = Union[TransitionProbability, ObservableExpectation, GateDistance]


@dataclass(frozen=True)
class PropagationResult:
    """Final-time propagator in both pictures plus diagnostics."""

    final_unitary: np.ndarray
    interaction_final: np.ndarray
    unitarity_residual: float
    grid: TimeGrid
    trajectory: Optional[np.ndarray] = None  # (n_steps + 1, N, N), Schrodinger picture


def interaction_phases(system: QuantumSystem, t: float) -> np.ndarray:
    """Diagonal of exp(+i H0 t)."""
    return np.exp(1j * system.energies * t)


def propagate(
    system: QuantumSystem,
    fld: ControlField,
    grid: Optional[TimeGrid] = None,
    *,
    keep_trajectory: bool = False,
    unitarity_tol: float = DEFAULT_UNITARITY_TOL,
) -> PropagationResult:
    """Integrate dU/dt = -i (H0 - mu eps(t)) U with midpoint-exponential steps.

    Each step applies the exact matrix exponential of the midpoint-frozen
    Hamiltonian, so every step is unitary to round-off and the global error
    is O(dt^2) in the field sampling only.
    """
    grid = _default_grid(fld, grid)
    eps = fld.sample_midpoints(grid.n_steps)
    if keep_trajectory:
        traj = engine.midpoint_trajectory(system.energies, system.dipole, eps, grid.dt)
        u_final = traj[-1]
    else:
        traj = None
        u_final = engine.midpoint_single(system.energies, system.dipole, eps, grid.dt)
    residual = float(np.abs(u_final.conj().T @ u_final - np.eye(system.dimension)).max())
    if residual > unitarity_tol:
        raise IntegrationError(
            f"unitarity residual {residual:.3e} exceeds {unitarity_tol:.1e}; "
            "reduce the grid dt"
        )
    u_inter = interaction_phases(system, grid.duration)[:, None] * u_final
    return PropagationResult(u_final, u_inter, residual, grid, traj)


def objective_value(result, objective: ObjectiveSpec) -> float:
    """Evaluate an objective on a PropagationResult or a plain U(T) matrix."""
    u = result.final_unitary if isinstance(result, PropagationResult) else np.asarray(result)
    objective.validate(u.shape[0])
    return objective.value(u)


@dataclass(frozen=True)
class DysonDecomposition:
    """Final-time interaction-picture perturbation orders U^0(T) .. U^M(T)."""

    orders: np.ndarray  # (M + 1, N, N)
    truncation_order: int
    grid: TimeGrid

    def partial_sum(self, upto: Optional[int] = None) -> np.ndarray:
        upto = self.truncation_order if upto is None else upto
        return self.orders[: upto + 1].sum(axis=0)


def dyson_terms(
    system: QuantumSystem,
    fld: ControlField,
    grid: Optional[TimeGrid] = None,
    order: int = 12,
) -> DysonDecomposition:
    """Interaction-picture perturbation orders by iterated quadrature.

    U^m(t) = -i int_0^t H_I(tau) U^(m-1)(tau) dtau with U^0 = I and
    H_I(t) = exp(i H0 t) (-mu eps(t)) exp(-i H0 t), accumulated with
    cumulative trapezoids on the grid points.
    """
    if order < 1:
        raise ValidationError("order must be >= 1")
    grid = _default_grid(fld, grid)
    n = system.dimension
    tt = grid.points()
    eps = fld.evaluate(tt)
    phases = np.exp(1j * np.multiply.outer(tt, system.energies))  # (n_t, N)
    # H_I(t)[a, b] = -eps(t) mu[a, b] exp(i (E_a - E_b) t)
    h_i = -eps[:, None, None] * system.dipole[None] * (phases[:, :, None] * phases.conj()[:, None, :])
    orders = np.empty((order + 1, n, n), dtype=complex)
    orders[0] = np.eye(n)
    current = np.broadcast_to(np.eye(n, dtype=complex), h_i.shape).copy()
    for m in range(1, order + 1):
        integrand = -1j * np.einsum("tij,tjk->tik", h_i, current)
        current = cumulative_trapezoid(integrand, tt, axis=0, initial=0)
        orders[m] = current[-1]
    return DysonDecomposition(orders, order, grid)


@dataclass(frozen=True)
class InterferenceTable:
    """Order-resolved direct and cross contributions to one P_ji element."""

    amplitudes: np.ndarray  # (M + 1,) complex, U^m element j<-i
    direct_terms: np.ndarray  # |U^m|^2
    cross_terms: np.ndarray  # (M + 1, M + 1), 2 Re(U^m U^m'*) strictly below diagonal
    total: float  # |sum_m U^m|^2

    @property
    def direct_sum(self) -> float:
        return float(self.direct_terms.sum())

    @property
    def cross_sum(self) -> float:
        return float(self.cross_terms.sum())


def order_interference(decomp: DysonDecomposition, initial: int, final: int) -> InterferenceTable:
    """Decompose |sum_m U^m_ji|^2 into direct and pairwise interference terms."""
    amps = decomp.orders[:, final, initial].copy()
    direct = np.abs(amps) ** 2
    m1 = amps[:, None] * amps.conj()[None, :]
    cross = np.tril(2.0 * m1.real, k=-1)
    total = float(abs(amps.sum()) ** 2)
    return InterferenceTable(amps, direct, cross, total)


@dataclass(frozen=True)
class LandscapeScan:
    """Dense objective values over two gene axes of a chromosome."""

    values: np.ndarray  # (n1, n2)
    axis1_index: int
    axis2_index: int
    axis1_values: np.ndarray
    axis2_values: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# landscape scan over genes {self.axis1_index} (rows) and {self.axis2_index} (cols)\n")
        buf.write("gene1_value," + ",".join(f"{v:.12g}" for v in self.axis2_values) + "\n")
        for r, v1 in enumerate(self.axis1_values):
            buf.write(f"{v1:.12g}," + ",".join(f"{x:.12g}" for x in self.values[r]) + "\n")
        return buf.getvalue()


def landscape_scan(
    system: QuantumSystem,
    template: Chromosome,
    duration: float,
    axis1: tuple,
    axis2: tuple,
    objective: Optional[ObjectiveSpec] = None,
    grid: Optional[TimeGrid] = None,
) -> LandscapeScan:
    """Objective values over a 2-D slice of gene space.

    axis1/axis2 are (gene_index, (lo, hi), n_points); all other genes stay at
    the template values.  Uses the same midpoint-exponential integrator as
    `propagate`, batched over the grid.
    """
    if objective is None:
        objective = TransitionProbability(0, system.dimension - 1)
    objective.validate(system.dimension)
    g1, (lo1, hi1), n1 = axis1
    g2, (lo2, hi2), n2 = axis2
    n_genes = 2 * template.n_modes
    for g in (g1, g2):
        if not 0 <= g < n_genes:
            raise ValidationError(f"gene index {g} out of range for {n_genes} genes")
    v1 = np.linspace(lo1, hi1, n1)
    v2 = np.linspace(lo2, hi2, n2)
    genes = np.tile(template.genes, (n1 * n2, 1))
    mesh1, mesh2 = np.meshgrid(v1, v2, indexing="ij")
    genes[:, g1] = mesh1.ravel()
    genes[:, g2] = mesh2.ravel()
    if grid is None:
        grid = TimeGrid.for_duration(duration)
    k = template.n_modes
    tm = grid.midpoints()
    # (B, n_steps) midpoint field samples for every grid point
    eps = (
        template.fixed_amplitude
        * np.cos(genes[:, None, :k] * tm[None, :, None] + genes[:, None, k:])
    ).sum(axis=2)
    u_final = engine.midpoint_batch(system.energies, system.dipole, eps, grid.dt)
    vals = np.array([objective.value(u) for u in u_final]).reshape(n1, n2)
    return LandscapeScan(vals, g1, g2, v1, v2)
