"""Evolutionary optimizers: traditional GA, NSGA-II and the ACROMUSE
adaptive GA, with the population-diversity measures that drive adaptation.

All optimizers are deterministic functions of (config, seed): per-evaluation
seeds derive from (run seed, generation, slot), populations evolve in fixed
order, and no state leaks between runs.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .system import Chromosome, FieldBounds, wrap_phase

#: uniform-distribution diversity ceiling: std of U(0,1) is 1/sqrt(12)
UNIFORM_DIVERSITY = 1.0 / math.sqrt(12.0)


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 60
    generations: int = 300
    bounds: FieldBounds = field(default_factory=FieldBounds)
    n_modes: int = 7
    fixed_amplitude: float = 0.15
    duration: float = 40.0
    crossover_prob: float = 0.9
    mutation_prob: Optional[float] = None  # default 1/n_genes
    tournament_size: int = 3
    elitism_count: int = 2
    seed: int = 0
    sbx_eta: float = 10.0
    poly_eta: float = 20.0
    # ACROMUSE adaptation ranges
    pc_min: float = 0.6
    pc_max: float = 0.95
    pm_min: Optional[float] = None  # default 1/n_genes
    pm_max: float = 0.25
    tour_min: int = 2
    tour_max: int = 5
    spd_ref: float = UNIFORM_DIVERSITY
    hpd_ref: float = UNIFORM_DIVERSITY

    def __post_init__(self):
        if self.population_size < 4 or self.population_size % 2:
            raise ValidationError("population_size must be even and >= 4")
        if not (0 <= self.crossover_prob <= 1):
            raise ValidationError("crossover_prob must be in [0, 1]")
        if self.mutation_prob is not None and not (0 <= self.mutation_prob <= 1):
            raise ValidationError("mutation_prob must be in [0, 1]")
        if self.tournament_size < 2:
            raise ValidationError("tournament_size must be >= 2")
        if self.generations < 1:
            raise ValidationError("generations must be >= 1")

    @property
    def n_genes(self) -> int:
        return 2 * self.n_modes

    @property
    def pm_default(self) -> float:
        return self.mutation_prob if self.mutation_prob is not None else 1.0 / self.n_genes

    @property
    def pm_floor(self) -> float:
        return self.pm_min if self.pm_min is not None else 1.0 / self.n_genes

    def gene_lows(self) -> np.ndarray:
        return self.bounds.gene_lows(self.n_modes)

    def gene_highs(self) -> np.ndarray:
        return self.bounds.gene_highs(self.n_modes)

    def chromosome(self, genes: np.ndarray) -> Chromosome:
        return Chromosome.from_genes(genes, self.fixed_amplitude)


@dataclass
class Individual:
    genes: np.ndarray
    fitness: float = math.nan
    objectives: Optional[np.ndarray] = None  # NSGA-II vector
    rank: int = 0
    crowding: float = 0.0
    last_eval_seed: int = 0


@dataclass
class DiversityTrace:
    """Per-generation diversity and adaptation history."""

    spd: list = field(default_factory=list)
    hpd: list = field(default_factory=list)
    best: list = field(default_factory=list)
    mean: list = field(default_factory=list)
    p_c: list = field(default_factory=list)
    p_m: list = field(default_factory=list)
    tournament: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("generation,spd,hpd,best,mean,p_c,p_m,tournament\n")
        for g in range(len(self.spd)):
            pc = self.p_c[g] if self.p_c else ""
            pm = self.p_m[g] if self.p_m else ""
            tau = self.tournament[g] if self.tournament else ""
            buf.write(
                f"{g},{self.spd[g]:.8g},{self.hpd[g]:.8g},{self.best[g]:.10g},"
                f"{self.mean[g]:.10g},{pc},{pm},{tau}\n"
            )
        return buf.getvalue()


# Batched fitness protocol: callable(genes (P, n_genes), seeds (P,)) -> (P,) floats
FitnessFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _eval_seeds(run_seed: int, generation: int, count: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=(run_seed & 0xFFFFFFFFFFFFFFFF, generation))
    return ss.generate_state(count, dtype=np.uint64)


def spd(population: np.ndarray, lows: np.ndarray, highs: np.ndarray) -> float:
    """Standard population diversity: mean per-gene std over the gene range."""
    ranges = highs - lows
    if np.any(ranges <= 0):
        raise ValidationError("degenerate gene bounds")
    stds = population.std(axis=0)
    return float(np.clip((stds / ranges).mean(), 0.0, 1.0))


def hpd(population: np.ndarray, fitnesses: np.ndarray,
        lows: np.ndarray, highs: np.ndarray) -> float:
    """Healthy population diversity: fitness-weighted analogue of spd."""
    ranges = highs - lows
    if np.any(ranges <= 0):
        raise ValidationError("degenerate gene bounds")
    f = np.asarray(fitnesses, dtype=float)
    w = f - f.min() if f.min() < 0 else f.copy()
    total = w.sum()
    if total <= 0:
        w = np.full(f.size, 1.0 / f.size)
    else:
        w = w / total
    centroid = w @ population
    var = w @ (population - centroid) ** 2
    return float(np.clip((np.sqrt(var) / ranges).mean(), 0.0, 1.0))


def sbx_crossover(rng: np.random.Generator, a: np.ndarray, b: np.ndarray,
                  lows: np.ndarray, highs: np.ndarray, eta: float):
    """Simulated binary crossover, per-gene spread from the eta distribution."""
    u = rng.random(a.size)
    beta = np.where(u <= 0.5, (2.0 * u) ** (1.0 / (eta + 1.0)),
                    (0.5 / (1.0 - u)) ** (1.0 / (eta + 1.0)))
    swap = rng.random(a.size) < 0.5
    beta = np.where(swap, beta, 1.0 / np.maximum(beta, 1e-300))
    c1 = 0.5 * ((1 + beta) * a + (1 - beta) * b)
    c2 = 0.5 * ((1 - beta) * a + (1 + beta) * b)
    return _clip_genes(c1, lows, highs), _clip_genes(c2, lows, highs)


def polynomial_mutation(rng: np.random.Generator, genes: np.ndarray,
                        lows: np.ndarray, highs: np.ndarray,
                        prob: float, eta: float) -> np.ndarray:
    """Bounded polynomial mutation applied per gene with probability prob."""
    out = genes.copy()
    span = highs - lows
    pick = rng.random(genes.size) < prob
    if not pick.any():
        return out
    u = rng.random(genes.size)
    x = (out - lows) / span
    low_side = u < 0.5
    d = np.where(low_side, x, 1.0 - x)
    pw = 1.0 / (eta + 1.0)
    delta = np.where(
        low_side,
        (2 * u + (1 - 2 * u) * (1 - d) ** (eta + 1)) ** pw - 1.0,
        1.0 - (2 * (1 - u) + 2 * (u - 0.5) * (1 - d) ** (eta + 1)) ** pw,
    )
    out = np.where(pick, out + delta * span, out)
    return _clip_genes(out, lows, highs)


def _clip_genes(genes: np.ndarray, lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
    """Clip frequencies, wrap phases (second half of the gene vector)."""
    k = genes.size // 2
    out = genes.copy()
    out[:k] = np.clip(out[:k], lows[:k], highs[:k])
    out[k:] = wrap_phase(out[k:])
    # wrapped phases stay inside [0, 2pi) which the bounds cover
    return out


def _tournament(rng: np.random.Generator, fitnesses: np.ndarray, size: int) -> int:
    idx = rng.integers(0, fitnesses.size, size)
    return int(idx[np.argmax(fitnesses[idx])])


@dataclass
class TgaResult:
    best: Individual
    best_trace: np.ndarray
    mean_trace: np.ndarray
    diversity: DiversityTrace
    final_population: np.ndarray
    final_fitness: np.ndarray


def tga_optimize(evaluator: FitnessFunction, config: GAConfig,
                 initial_population: Optional[np.ndarray] = None) -> TgaResult:
    """Traditional generational GA with static operators and elitism.

    Tournament selection, SBX crossover, polynomial mutation.  Fitness is
    maximized.  Elites carry their stored fitness to the next generation
    without re-evaluation, which is exactly the static selection pressure
    that loses diversity on noisy landscapes.
    """
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    lows, highs = config.gene_lows(), config.gene_highs()
    if initial_population is not None:
        pop = np.array(initial_population, dtype=float)
        if pop.shape != (config.population_size, config.n_genes):
            raise ValidationError("initial population shape mismatch")
    else:
        pop = rng.uniform(lows, highs, (config.population_size, config.n_genes))
    fit = evaluator(pop, _eval_seeds(config.seed, 0, config.population_size))
    p_m = config.pm_default

    best_genes = pop[np.argmax(fit)].copy()
    best_fit = float(fit.max())
    div = DiversityTrace()
    best_trace, mean_trace = [], []

    for gen in range(1, config.generations + 1):
        div.spd.append(spd(pop, lows, highs))
        div.hpd.append(hpd(pop, fit, lows, highs))
        div.best.append(float(fit.max()))
        div.mean.append(float(fit.mean()))
        best_trace.append(best_fit)
        mean_trace.append(float(fit.mean()))

        elite_idx = np.argsort(fit)[::-1][: config.elitism_count]
        children = []
        while len(children) < config.population_size - config.elitism_count:
            pa = pop[_tournament(rng, fit, config.tournament_size)]
            pb = pop[_tournament(rng, fit, config.tournament_size)]
            if rng.random() < config.crossover_prob:
                c1, c2 = sbx_crossover(rng, pa, pb, lows, highs, config.sbx_eta)
            else:
                c1, c2 = pa.copy(), pb.copy()
            children.append(polynomial_mutation(rng, c1, lows, highs, p_m, config.poly_eta))
            if len(children) < config.population_size - config.elitism_count:
                children.append(polynomial_mutation(rng, c2, lows, highs, p_m, config.poly_eta))
        children = np.array(children)
        child_fit = evaluator(children, _eval_seeds(config.seed, gen, len(children)))
        pop = np.vstack([pop[elite_idx], children])
        fit = np.concatenate([fit[elite_idx], child_fit])
        if fit.max() > best_fit:
            best_fit = float(fit.max())
            best_genes = pop[np.argmax(fit)].copy()

    div.spd.append(spd(pop, lows, highs))
    div.hpd.append(hpd(pop, fit, lows, highs))
    div.best.append(float(fit.max()))
    div.mean.append(float(fit.mean()))
    best_trace.append(best_fit)
    mean_trace.append(float(fit.mean()))
    return TgaResult(
        best=Individual(best_genes, best_fit),
        best_trace=np.array(best_trace),
        mean_trace=np.array(mean_trace),
        diversity=div,
        final_population=pop,
        final_fitness=fit,
    )


@dataclass
class AcromuseResult:
    population: np.ndarray
    fitness: np.ndarray
    diversity: DiversityTrace
    best: Individual
    best_trace: np.ndarray


def _acromuse_rates(config: GAConfig, spd_val: float, hpd_val: float):
    """Adaptive crossover/mutation/selection knobs from the diversity pair."""
    pc = config.pc_min + (config.pc_max - config.pc_min) * min(spd_val / config.spd_ref, 1.0)
    pm = config.pm_floor + (config.pm_max - config.pm_floor) * float(
        np.clip(1.0 - spd_val / config.spd_ref, 0.0, 1.0)
    )
    tau = config.tour_min + int(
        round((config.tour_max - config.tour_min) * float(np.clip(1.0 - hpd_val / config.hpd_ref, 0.0, 1.0)))
    )
    return pc, pm, int(np.clip(tau, config.tour_min, config.tour_max))


def acromuse_optimize(noisy_evaluator: FitnessFunction, config: GAConfig,
                      initial_population: Optional[np.ndarray] = None) -> AcromuseResult:
    """Adaptive crossover/mutation/selection GA for per-draw noisy fitness.

    Every individual is re-evaluated with fresh noise each generation (no
    stale lucky draws).  Crossover probability tracks SPD, the population
    mutation rate grows as SPD collapses, per-individual mutation scales
    with fitness health, and tournament pressure relaxes as HPD falls.
    Returns the final population rather than a single point: on a noisy
    landscape the diverse set is the product.
    """
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    lows, highs = config.gene_lows(), config.gene_highs()
    n_pop = config.population_size
    if initial_population is not None:
        pop = np.array(initial_population, dtype=float)
        if pop.shape != (n_pop, config.n_genes):
            raise ValidationError("initial population shape mismatch")
    else:
        pop = rng.uniform(lows, highs, (n_pop, config.n_genes))
    fit = noisy_evaluator(pop, _eval_seeds(config.seed, 0, n_pop))
    spd_val = spd(pop, lows, highs)
    hpd_val = hpd(pop, fit, lows, highs)
    pc, pm, tau = _acromuse_rates(config, spd_val, hpd_val)

    div = DiversityTrace()
    best_trace = []
    best_genes = pop[np.argmax(fit)].copy()
    best_fit = float(fit.max())

    for gen in range(1, config.generations + 1):
        div.spd.append(spd_val)
        div.hpd.append(hpd_val)
        div.best.append(float(fit.max()))
        div.mean.append(float(fit.mean()))
        div.p_c.append(pc)
        div.p_m.append(pm)
        div.tournament.append(tau)
        best_trace.append(best_fit)

        # recombination offspring
        cross = []
        while len(cross) < n_pop:
            pa = pop[_tournament(rng, fit, tau)]
            pb = pop[_tournament(rng, fit, tau)]
            if rng.random() < pc:
                c1, c2 = sbx_crossover(rng, pa, pb, lows, highs, config.sbx_eta)
            else:
                c1, c2 = pa.copy(), pb.copy()
            cross.extend([c1, c2])
        cross = np.array(cross[:n_pop])
        # mutation offspring with fitness-scaled per-individual rates
        f_max, f_mean = float(fit.max()), float(fit.mean())
        denom = f_max - f_mean + 1e-12
        mut = np.empty_like(pop)
        for i in range(n_pop):
            pm_i = pm if fit[i] < f_mean else pm * (f_max - fit[i]) / denom
            pm_i = min(max(pm_i, config.pm_floor), config.pm_max)
            mut[i] = polynomial_mutation(rng, pop[i], lows, highs, pm_i, config.poly_eta)

        union = np.vstack([cross, mut])
        seeds = _eval_seeds(config.seed, gen, union.shape[0] + n_pop)
        union_fit = noisy_evaluator(union, seeds[: union.shape[0]])

        # select the next population from the union under fresh noise
        next_pop = np.empty_like(pop)
        next_fit = np.empty(n_pop)
        # one elite slot: current best re-evaluated with fresh noise
        elite = int(np.argmax(union_fit))
        next_pop[0] = union[elite]
        next_fit[0] = union_fit[elite]
        for i in range(1, n_pop):
            j = _tournament(rng, union_fit, tau)
            next_pop[i] = union[j]
            next_fit[i] = union_fit[j]
        pop, fit = next_pop, next_fit

        spd_val = spd(pop, lows, highs)
        hpd_val = hpd(pop, fit, lows, highs)
        pc, pm, tau = _acromuse_rates(config, spd_val, hpd_val)
        if fit.max() > best_fit:
            best_fit = float(fit.max())
            best_genes = pop[np.argmax(fit)].copy()

    div.spd.append(spd_val)
    div.hpd.append(hpd_val)
    div.best.append(float(fit.max()))
    div.mean.append(float(fit.mean()))
    div.p_c.append(pc)
    div.p_m.append(pm)
    div.tournament.append(tau)
    best_trace.append(best_fit)
    return AcromuseResult(pop, fit, div, Individual(best_genes, best_fit), np.array(best_trace))


def retain_distinct(population: np.ndarray, fitness: np.ndarray, count: int,
                    min_separation: float = 0.05) -> np.ndarray:
    """Greedy pick of high-fitness, mutually distant individuals (row indices)."""
    order = np.argsort(fitness)[::-1]
    scale = np.linalg.norm(population.std(axis=0)) + 1e-12
    chosen: list[int] = []
    for idx in order:
        if len(chosen) >= count:
            break
        if all(np.linalg.norm(population[idx] - population[c]) / scale / math.sqrt(population.shape[1]) > min_separation
               for c in chosen):
            chosen.append(int(idx))
    for idx in order:  # pad if the separation filter was too strict
        if len(chosen) >= count:
            break
        if int(idx) not in chosen:
            chosen.append(int(idx))
    return np.array(chosen[:count])


def instance_table(evaluator_factory, solutions: np.ndarray, instance_seeds: Sequence[int]) -> np.ndarray:
    """Objective of each solution under each noise instance; (n_sol, n_inst).

    evaluator_factory(seed) must return a deterministic single-instance
    evaluator genes -> float for that frozen noise draw.
    """
    out = np.empty((solutions.shape[0], len(instance_seeds)))
    for col, s in enumerate(instance_seeds):
        ev = evaluator_factory(int(s))
        for row in range(solutions.shape[0]):
            out[row, col] = ev(solutions[row])
    return out


# ---------------------------------------------------------------------------
# NSGA-II


def fast_nondominated_sort(objectives: np.ndarray) -> list[np.ndarray]:
    """Fronts of minimization objectives; objectives shape (P, n_obj)."""
    p = objectives.shape[0]
    less_eq = (objectives[:, None, :] <= objectives[None, :, :]).all(axis=2)
    less = (objectives[:, None, :] < objectives[None, :, :]).any(axis=2)
    dominates = less_eq & less  # [i, j] True when i dominates j
    n_dominators = dominates.sum(axis=0)
    fronts = []
    assigned = np.zeros(p, dtype=bool)
    current = np.where(n_dominators == 0)[0]
    while current.size:
        fronts.append(current)
        assigned[current] = True
        n_dominators = n_dominators - dominates[current].sum(axis=0)
        current = np.where((n_dominators == 0) & ~assigned)[0]
    return fronts


def crowding_distance(objectives: np.ndarray) -> np.ndarray:
    """Crowding distance within one front; larger is less crowded."""
    n, m = objectives.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(m):
        order = np.argsort(objectives[:, k], kind="stable")
        span = objectives[order[-1], k] - objectives[order[0], k]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span <= 0:
            continue
        dist[order[1:-1]] += (objectives[order[2:], k] - objectives[order[:-2], k]) / span
    return dist


def _nsga2_select(rng, ranks, crowding):
    a, b = rng.integers(0, ranks.size, 2)
    if ranks[a] != ranks[b]:
        return a if ranks[a] < ranks[b] else b
    return a if crowding[a] >= crowding[b] else b


@dataclass(frozen=True)
class ParetoPoint:
    chromosome: Chromosome
    nominal: float
    expected: float
    variance: float
    sample_count: int
    halfwidth: float

    def objectives(self) -> np.ndarray:
        """Internal minimization vector (-nominal, -expected, variance)."""
        return np.array([-self.nominal, -self.expected, self.variance])


@dataclass(frozen=True)
class ParetoFront:
    points: tuple

    def __len__(self):
        return len(self.points)

    def objective_matrix(self) -> np.ndarray:
        return np.array([p.objectives() for p in self.points])

    def nondominated(self) -> bool:
        """Independent pairwise check of mutual non-domination."""
        obj = self.objective_matrix()
        n = len(self.points)
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                if (obj[i] <= obj[j]).all() and (obj[i] < obj[j]).any():
                    return False
        return True

    def best_nominal(self) -> ParetoPoint:
        return max(self.points, key=lambda p: p.nominal)

    def to_csv(self) -> str:
        buf = io.StringIO()
        k = self.points[0].chromosome.n_modes if self.points else 0
        cols = [f"omega_{i}" for i in range(k)] + [f"phase_{i}" for i in range(k)]
        buf.write("nominal,expected,variance,sample_count,halfwidth," + ",".join(cols) + "\n")
        for p in self.points:
            genes = ",".join(f"{g:.12g}" for g in p.chromosome.genes)
            buf.write(
                f"{p.nominal:.10g},{p.expected:.10g},{p.variance:.10g},"
                f"{p.sample_count},{p.halfwidth:.6g},{genes}\n"
            )
        return buf.getvalue()

    def to_json(self, indent=2) -> str:
        return json.dumps(
            [
                {
                    "frequencies": list(p.chromosome.frequencies),
                    "phases": list(p.chromosome.phases),
                    "fixed_amplitude": p.chromosome.fixed_amplitude,
                    "nominal": p.nominal,
                    "expected": p.expected,
                    "variance": p.variance,
                    "sample_count": p.sample_count,
                    "halfwidth": p.halfwidth,
                }
                for p in self.points
            ],
            indent=indent,
        )

    @classmethod
    def from_json(cls, text: str) -> "ParetoFront":
        rows = json.loads(text)
        pts = tuple(
            ParetoPoint(
                Chromosome(np.array(r["frequencies"]), np.array(r["phases"]), r["fixed_amplitude"]),
                r["nominal"], r["expected"], r["variance"], r["sample_count"], r["halfwidth"],
            )
            for r in rows
        )
        return cls(pts)


# Moment evaluator protocol: callable(genes (P, n), seeds (P,)) ->
#   (objectives (P, 3) as (nominal, expected, variance), sample_count, halfwidth)
MomentEvaluator = Callable[[np.ndarray, np.ndarray], tuple]


def nsga2_optimize(moment_evaluator: MomentEvaluator, config: GAConfig,
                   final_precision_factor: int = 4) -> ParetoFront:
    """NSGA-II over (maximize nominal, maximize E[P], minimize var(P)).

    The returned front is re-evaluated at final_precision_factor times the
    search-time sampling budget and re-filtered for non-domination.
    """
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    lows, highs = config.gene_lows(), config.gene_highs()
    n_pop = config.population_size
    p_m = config.pm_default

    pop = rng.uniform(lows, highs, (n_pop, config.n_genes))
    vals, n_mc, hw = moment_evaluator(pop, _eval_seeds(config.seed, 0, n_pop))
    obj = _to_min(vals)

    for gen in range(1, config.generations + 1):
        ranks, crowd = _rank_crowd(obj)
        children = []
        while len(children) < n_pop:
            pa = pop[_nsga2_select(rng, ranks, crowd)]
            pb = pop[_nsga2_select(rng, ranks, crowd)]
            if rng.random() < config.crossover_prob:
                c1, c2 = sbx_crossover(rng, pa, pb, lows, highs, config.sbx_eta)
            else:
                c1, c2 = pa.copy(), pb.copy()
            children.append(polynomial_mutation(rng, c1, lows, highs, p_m, config.poly_eta))
            if len(children) < n_pop:
                children.append(polynomial_mutation(rng, c2, lows, highs, p_m, config.poly_eta))
        children = np.array(children)
        cvals, n_mc, hw = moment_evaluator(children, _eval_seeds(config.seed, gen, n_pop))
        union = np.vstack([pop, children])
        uvals = np.vstack([vals, cvals])
        uobj = _to_min(uvals)
        keep = _environmental_select(uobj, n_pop)
        pop, vals, obj = union[keep], uvals[keep], uobj[keep]

    # high-precision re-evaluation of the first front, then final filter
    ranks, _ = _rank_crowd(obj)
    front_idx = np.where(ranks == 0)[0]
    front_genes = pop[front_idx]
    fvals, fn_mc, fhw = moment_evaluator(
        front_genes,
        _eval_seeds(config.seed, config.generations + 1, front_genes.shape[0]),
        precision_factor=final_precision_factor,
    )
    fobj = _to_min(fvals)
    fronts = fast_nondominated_sort(fobj)
    keep = fronts[0]
    points = tuple(
        ParetoPoint(
            config.chromosome(front_genes[i]),
            float(fvals[i, 0]), float(fvals[i, 1]), float(fvals[i, 2]),
            int(fn_mc), float(fhw),
        )
        for i in keep
    )
    return ParetoFront(points)


def _to_min(vals: np.ndarray) -> np.ndarray:
    out = np.array(vals, dtype=float)
    out[:, 0] *= -1
    out[:, 1] *= -1
    return out


def _rank_crowd(obj: np.ndarray):
    fronts = fast_nondominated_sort(obj)
    ranks = np.empty(obj.shape[0], dtype=int)
    crowd = np.empty(obj.shape[0])
    for r, f in enumerate(fronts):
        ranks[f] = r
        crowd[f] = crowding_distance(obj[f])
    return ranks, crowd


def _environmental_select(obj: np.ndarray, n_keep: int) -> np.ndarray:
    fronts = fast_nondominated_sort(obj)
    keep: list[int] = []
    for f in fronts:
        if len(keep) + f.size <= n_keep:
            keep.extend(f.tolist())
        else:
            crowd = crowding_distance(obj[f])
            order = np.argsort(crowd)[::-1]
            keep.extend(f[order[: n_keep - len(keep)]].tolist())
            break
    return np.array(keep)


def seed_from_front(front: ParetoFront, config: GAConfig,
                    jitter: float = 0.02) -> np.ndarray:
    """Initial population from Pareto chromosomes, padded by bounded jitter.

    Padding copies cycle through the front with Gaussian jitter of
    `jitter` times the gene range, clipped back into bounds.
    """
    if len(front) == 0:
        raise ValidationError("cannot seed from an empty front")
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0x5EED)))
    lows, highs = config.gene_lows(), config.gene_highs()
    base = np.array([p.chromosome.genes for p in front.points])
    n_pop = config.population_size
    if base.shape[0] >= n_pop:
        return base[:n_pop].copy()
    rows = [base]
    need = n_pop - base.shape[0]
    src = np.tile(base, (need // base.shape[0] + 1, 1))[:need]
    noise = jitter * (highs - lows) * rng.standard_normal(src.shape)
    rows.append(np.array([_clip_genes(g, lows, highs) for g in src + noise]))
    return np.vstack(rows)


def hypervolume_2d(points: np.ndarray, reference: np.ndarray) -> float:
    """Dominated hypervolume of a 2-D minimization front w.r.t. a reference."""
    pts = points[np.all(points <= reference, axis=1)]
    if pts.size == 0:
        return 0.0
    pts = pts[np.argsort(pts[:, 0])]
    hv = 0.0
    prev_y = reference[1]
    for x, y in pts:
        if y < prev_y:
            hv += (reference[0] - x) * (prev_y - y)
            prev_y = y
    return float(hv)
