"""Batched fitness evaluators connecting propagation to the optimizers.

Evaluators take (genes matrix, per-evaluation seeds) and return fitness
arrays, so whole populations propagate in one kernel call.  Seeds feed
per-evaluation noise draws; deterministic evaluators ignore them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import engine
from .errors import ValidationError
from .moments import MomentSpec, calibrate_samples
from .propagation import TimeGrid, TransitionProbability
from .system import ControlField, ModeAmplitude, QuantumSystem

DEFAULT_EVAL_STEPS = 1000


def _gene_fields(genes: np.ndarray, amplitudes: np.ndarray, tm: np.ndarray) -> np.ndarray:
    """Midpoint field samples (P, n_steps) for a batch of gene vectors."""
    k = genes.shape[1] // 2
    return (
        amplitudes * np.cos(genes[:, None, :k] * tm[None, :, None] + genes[:, None, k:])
    ).sum(axis=2)


@dataclass
class NominalEvaluator:
    """Deterministic transition-probability fitness via Strang stepping."""

    system: QuantumSystem
    objective: TransitionProbability
    fixed_amplitude: float
    duration: float
    n_steps: int = DEFAULT_EVAL_STEPS

    def __post_init__(self):
        self.objective.validate(self.system.dimension)
        self._dt = self.duration / self.n_steps
        self._tm = (np.arange(self.n_steps) + 0.5) * self._dt
        self._factors = engine.strang_factors(self.system.energies, self.system.dipole, self._dt)

    def __call__(self, genes: np.ndarray, seeds: Optional[np.ndarray] = None) -> np.ndarray:
        genes = np.atleast_2d(genes)
        k = genes.shape[1] // 2
        amps = np.full(k, self.fixed_amplitude)
        eps = _gene_fields(genes, amps, self._tm)
        u = engine.strang_batch(self._factors, eps, self._dt)
        return np.abs(u[:, self.objective.final, self.objective.initial]) ** 2

    def single(self, genes: np.ndarray) -> float:
        return float(self(genes[None])[0])


@dataclass
class NoisyAmplitudeEvaluator:
    """Per-draw noisy fitness: every call samples fresh mode amplitudes.

    The draw for slot i comes from seeds[i] alone, so identical seeds give
    identical fitness, making optimizer runs reproducible end to end.
    """

    system: QuantumSystem
    objective: TransitionProbability
    spec: MomentSpec
    fixed_amplitude: float
    duration: float
    n_steps: int = DEFAULT_EVAL_STEPS

    def __post_init__(self):
        self.objective.validate(self.system.dimension)
        for p in self.spec.parameters:
            if not isinstance(p.target, ModeAmplitude):
                raise ValidationError("NoisyAmplitudeEvaluator expects mode-amplitude noise")
        self._dt = self.duration / self.n_steps
        self._tm = (np.arange(self.n_steps) + 0.5) * self._dt
        self._factors = engine.strang_factors(self.system.energies, self.system.dipole, self._dt)

    def _draw_amplitudes(self, n_modes: int, seeds: np.ndarray) -> np.ndarray:
        amps = np.full((seeds.size, n_modes), self.fixed_amplitude)
        for row, sd in enumerate(seeds):
            rng = np.random.default_rng(np.random.SeedSequence(int(sd)))
            for p in self.spec.parameters:
                amps[row, p.target.k] = p.sample_theta(self.fixed_amplitude, rng)
        return np.abs(amps)

    def __call__(self, genes: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        genes = np.atleast_2d(genes)
        k = genes.shape[1] // 2
        amps = self._draw_amplitudes(k, np.asarray(seeds))
        cos_args = genes[:, None, :k] * self._tm[None, :, None] + genes[:, None, k:]
        eps = (amps[:, None, :] * np.cos(cos_args)).sum(axis=2)
        u = engine.strang_batch(self._factors, eps, self._dt)
        return np.abs(u[:, self.objective.final, self.objective.initial]) ** 2

    def frozen_instance(self, seed: int):
        """genes -> float evaluator with the noise draw frozen at `seed`."""

        def evaluate(genes: np.ndarray) -> float:
            return float(self(genes[None], np.array([seed]))[0])

        return evaluate


@dataclass
class DipoleMomentEvaluator:
    """(nominal, E[P], var(P)) per chromosome for mean-variance optimization.

    E and var come from Monte-Carlo re-propagation with a draw count
    calibrated to the requested halfwidth; the count is re-derived every
    `recalibrate_every` calls from the latest variance estimates.
    """

    system: QuantumSystem
    objective: TransitionProbability
    spec: MomentSpec
    fixed_amplitude: float
    duration: float
    halfwidth: float = 0.02
    confidence: float = 0.95
    n_steps: int = DEFAULT_EVAL_STEPS
    mc_base_steps: int = 250
    recalibrate_every: int = 10
    pilot_samples: int = 64

    def __post_init__(self):
        self.objective.validate(self.system.dimension)
        self._dt = self.duration / self.n_steps
        self._tm = (np.arange(self.n_steps) + 0.5) * self._dt
        self._factors = engine.strang_factors(self.system.energies, self.system.dipole, self._dt)
        self._n_mc = calibrate_samples(self.halfwidth, 0.0, self.confidence)
        self._calls = 0
        self._var_history: list[float] = []

    @property
    def current_samples(self) -> int:
        return self._n_mc

    def _recalibrate(self):
        if self._var_history:
            v = float(np.quantile(self._var_history[-200:], 0.9))
            self._n_mc = calibrate_samples(self.halfwidth, v, self.confidence)

    def _mc_columns(self, genes_row: np.ndarray, seed: int, n_draws: int):
        rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
        thetas = np.empty((n_draws, self.spec.n_params))
        mus = np.broadcast_to(self.system.dipole, (n_draws,) + self.system.dipole.shape).copy()
        for kk, p in enumerate(self.spec.parameters):
            t = p.target
            nom = self.system.dipole[t.i, t.j]
            thetas[:, kk] = p.sample_theta(nom, rng, size=n_draws)
            mus[:, t.i, t.j] = thetas[:, kk]
            mus[:, t.j, t.i] = thetas[:, kk]
        k = genes_row.size // 2
        fld = ControlField(
            np.full(k, self.fixed_amplitude), genes_row[:k], genes_row[k:], self.duration
        )
        u = engine.strang_richardson(self.system.energies, mus, fld, self.mc_base_steps)
        return np.abs(u[:, self.objective.final, self.objective.initial]) ** 2

    def __call__(self, genes: np.ndarray, seeds: np.ndarray, precision_factor: int = 1):
        genes = np.atleast_2d(genes)
        seeds = np.asarray(seeds)
        k = genes.shape[1] // 2
        amps = np.full(k, self.fixed_amplitude)
        eps = _gene_fields(genes, amps, self._tm)
        u = engine.strang_batch(self._factors, eps, self._dt)
        nominal = np.abs(u[:, self.objective.final, self.objective.initial]) ** 2

        self._calls += 1
        if self._calls % self.recalibrate_every == 0:
            self._recalibrate()
        n_draws = max(self.pilot_samples, self._n_mc) * precision_factor
        out = np.empty((genes.shape[0], 3))
        for row in range(genes.shape[0]):
            p_samples = self._mc_columns(genes[row], int(seeds[row]), n_draws)
            m = float(p_samples.mean())
            v = float(p_samples.var(ddof=1))
            out[row] = (nominal[row], m, v)
            self._var_history.append(v)
        return out, n_draws, self.halfwidth
