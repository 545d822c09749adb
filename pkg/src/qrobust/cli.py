"""Command-line surface: experiment orchestration and artifact emission.

Every run writes resolved-config.json (the full configuration echo with all
defaults applied) and manifest.json (versions, seed, wall time) into the
output directory; rerunning a command with an emitted resolved-config
reproduces every numeric artifact byte for byte.
"""
from __future__ import annotations

import csv
import importlib.resources
import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__, engine
from .config import (
    build_bounds,
    build_chromosome,
    build_field,
    build_grid,
    build_moment_spec,
    build_objective,
    build_system,
    build_uncertain_parameters,
    resolve_config,
)
from .errors import ConfigError, DecodingError, IntegrationError, QRobustError, ValidationError
from .evaluators import DipoleMomentEvaluator, NoisyAmplitudeEvaluator, NominalEvaluator
from .moments import (
    MomentSpec,
    asymptotic_moments,
    interference_breakdown,
    leading_order_moments,
    mc_estimate,
)
from .optimizers import (
    GAConfig,
    ParetoFront,
    acromuse_optimize,
    instance_table,
    nsga2_optimize,
    retain_distinct,
    seed_from_front,
    tga_optimize,
)
from .pathways import (
    EncodingScheme,
    decode_pathways,
    significant_parameters,
)
from .pmp import expected_gradient, nominal_gradient, pmp_residual
from .propagation import TransitionProbability, dyson_terms, landscape_scan, objective_value, order_interference, propagate
from .system import ControlField, DipoleElement, ModeAmplitude, UncertainParameter, default_amplitude_noise

_EXIT_CODES = {"config": 2, "validation": 3, "numerical": 4, "io": 5}


def _fail(err: Exception) -> int:
    category = getattr(err, "category", None)
    if isinstance(err, (OSError, json.JSONDecodeError)):
        category = "io"
    if category is None:
        raise err
    payload = {"error": {"category": category, "message": str(err)}}
    click.echo(json.dumps(payload), err=True)
    return _EXIT_CODES.get(category, 1)


def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e


def _prepare(ctx, command: str):
    params = ctx.obj
    raw = _load_config_file(params["config"])
    cfg = resolve_config(raw, seed=params["seed"], precision=params["precision"])
    out_dir = Path(params["out"] or f"qrobust-runs/{command}")
    out_dir.mkdir(parents=True, exist_ok=True)
    threads = params["threads"]
    if threads is None:
        threads = os.environ.get("QPR_THREADS")
    if threads is not None:
        engine.set_threads(int(threads))
    (out_dir / "resolved-config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True))
    return cfg, out_dir, time.time()


def _finish(out_dir: Path, command: str, cfg: dict, t0: float):
    import scipy

    manifest = {
        "command": command,
        "qrobust_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "seed": cfg["seed"],
        "wall_time_s": round(time.time() - t0, 3),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Experiment config JSON.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--threads", type=int, default=None,
              help="Worker thread cap (QPR_THREADS env is the fallback).")
@click.option("--precision", type=click.Choice(["fast", "strict"]), default="strict",
              help="Grid and truncation presets.")
@click.pass_context
def main(ctx, config, seed, out, threads, precision):
    """Robust quantum control: simulate, analyze pathways and moments,
    verify optimality, and run evolutionary optimizers."""
    ctx.obj = {
        "config": config,
        "seed": seed,
        "out": out,
        "threads": threads,
        "precision": precision,
    }


@main.command()
@click.option("--dyson-order", type=int, default=None,
              help="Also emit a Dyson order table up to this order.")
@click.pass_context
def simulate(ctx, dyson_order):
    """Propagate the configured field and report objective values."""
    try:
        cfg, out_dir, t0 = _prepare(ctx, "simulate")
        system = build_system(cfg)
        fld = build_field(cfg)
        grid = build_grid(cfg)
        objective = build_objective(cfg)
        res = propagate(system, fld, grid)
        report = {
            "objective": cfg["objective"],
            "value": objective_value(res, objective),
            "unitarity_residual": res.unitarity_residual,
            "transition_matrix_abs": np.abs(res.final_unitary).tolist(),
        }
        if dyson_order:
            dec = dyson_terms(system, fld, grid, order=dyson_order)
            table = order_interference(dec, objective.initial, objective.final)
            rows = ["order,re_amplitude,im_amplitude,direct_term"]
            for m, a in enumerate(table.amplitudes):
                rows.append(f"{m},{a.real:.12g},{a.imag:.12g},{abs(a)**2:.12g}")
            (out_dir / "dyson.csv").write_text("\n".join(rows) + "\n")
            report["dyson"] = {
                "order": dyson_order,
                "direct_sum": table.direct_sum,
                "cross_sum": table.cross_sum,
                "partial_sum_probability": table.total,
            }
        (out_dir / "report.json").write_text(json.dumps(report, indent=2))
        _finish(out_dir, "simulate", cfg, t0)
    except QRobustError as e:
        raise SystemExit(_fail(e))


@main.command()
@click.pass_context
def landscape(ctx):
    """Scan the objective over two gene axes and emit a CSV grid."""
    try:
        cfg, out_dir, t0 = _prepare(ctx, "landscape")
        if "landscape" not in cfg:
            raise ConfigError("landscape command needs a 'landscape' config section")
        system = build_system(cfg)
        chrom = build_chromosome(cfg)
        objective = build_objective(cfg)
        ax = cfg["landscape"]
        a1 = (ax["axis1"]["gene"], tuple(ax["axis1"]["range"]), ax["axis1"]["n"])
        a2 = (ax["axis2"]["gene"], tuple(ax["axis2"]["range"]), ax["axis2"]["n"])
        scan = landscape_scan(
            system, chrom, cfg["field"]["duration"], a1, a2, objective, build_grid(cfg)
        )
        (out_dir / "landscape.csv").write_text(scan.to_csv())
        _finish(out_dir, "landscape", cfg, t0)
    except QRobustError as e:
        raise SystemExit(_fail(e))


def _encoding_scheme(cfg, params):
    enc = cfg["encoding"]
    return EncodingScheme.build(
        tuple(p.target for p in params),
        max_total_order=enc["max_total_order"],
        n_samples=enc["n_samples"],
    )


@main.command()
@click.pass_context
def pathways(ctx):
    """Decode the pathway table and rank significant parameters."""
    try:
        cfg, out_dir, t0 = _prepare(ctx, "pathways")
        system = build_system(cfg)
        fld = build_field(cfg)
        grid = build_grid(cfg)
        objective = build_objective(cfg)
        params = build_uncertain_parameters(cfg)
        scheme = _encoding_scheme(cfg, params)
        enc = cfg["encoding"]
        table = decode_pathways(
            system, fld, scheme, objective.initial, objective.final,
            retention_tol=enc["retention_tol"], grid=grid,
            alias_tol=enc["alias_tol"], encode_radius=enc["radius"],
        )
        (out_dir / "pathways.csv").write_text(table.to_csv())
        sens = significant_parameters(system, fld, objective, threshold=0.01, grid=grid)
        report = {
            "n_pathways": len(table),
            "alias_ratio": table.alias_ratio,
            "nominal_probability": abs(table.nominal_amplitude) ** 2,
            "significant_parameters": [
                {"target": s.target.label(), "sensitivity": s.sensitivity, "mode": s.mode}
                for s in sens
            ],
        }
        (out_dir / "significant.json").write_text(json.dumps(report, indent=2))
        _finish(out_dir, "pathways", cfg, t0)
    except QRobustError as e:
        raise SystemExit(_fail(e))


@main.command()
@click.pass_context
def moments(ctx):
    """Asymptotic moments, interference breakdown and Monte-Carlo cross-check."""
    try:
        cfg, out_dir, t0 = _prepare(ctx, "moments")
        system = build_system(cfg)
        fld = build_field(cfg)
        grid = build_grid(cfg)
        objective = build_objective(cfg)
        spec = build_moment_spec(cfg)
        scheme = _encoding_scheme(cfg, spec.parameters)
        enc = cfg["encoding"]
        table = decode_pathways(
            system, fld, scheme, objective.initial, objective.final,
            retention_tol=enc["retention_tol"], grid=grid,
            alias_tol=enc["alias_tol"], encode_radius=enc["radius"],
        )
        report = asymptotic_moments(table, spec)
        breakdown = interference_breakdown(table, spec, n_bins=cfg["moments"]["n_bins"])
        report.interference = breakdown
        est = mc_estimate(
            system, fld, spec, objective,
            n_samples=cfg["mc"]["n_samples"], seed=cfg["seed"],
            base_steps=cfg["mc"]["base_steps"],
        )
        report.attach_mc(est)
        leading = leading_order_moments(system, fld, spec, objective, grid)
        payload = json.loads(report.to_json())
        payload["mc_mean"] = est.mean
        payload["mc_std_error"] = est.std_error_mean
        payload["leading_order"] = {
            "first_order_e_shift": leading.first_order_e_shift,
            "second_order_e_shift": leading.second_order_e_shift,
            "first_order_variance": leading.first_order_variance,
        }
        payload["asymptotic_vs_mc_gap"] = abs(report.expected_probability - est.mean)
        (out_dir / "robustness.json").write_text(json.dumps(payload, indent=2))
        (out_dir / "interference_bins.csv").write_text(breakdown.to_csv())
        (out_dir / "pathways.csv").write_text(table.to_csv())
        _finish(out_dir, "moments", cfg, t0)
    except QRobustError as e:
        raise SystemExit(_fail(e))


@main.command()
@click.argument("algorithm", type=click.Choice(["tga", "acromuse", "nsga2"]))
@click.option("--seed-front", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Pareto front JSON used to seed the initial population.")
@click.pass_context
def optimize(ctx, algorithm, seed_front):
    """Run the named evolutionary optimizer on the configured problem."""
    try:
        cfg, out_dir, t0 = _prepare(ctx, f"optimize-{algorithm}")
        system = build_system(cfg)
        objective = build_objective(cfg)
        opt = cfg["optimizer"]
        ga_config = GAConfig(
            population_size=opt["population_size"],
            generations=opt["generations"],
            bounds=build_bounds(cfg),
            n_modes=cfg["field"]["n_modes"],
            fixed_amplitude=cfg["field"]["fixed_amplitude"],
            duration=cfg["field"]["duration"],
            crossover_prob=opt["crossover_prob"],
            mutation_prob=opt["mutation_prob"],
            tournament_size=opt["tournament_size"],
            elitism_count=opt["elitism_count"],
            seed=cfg["seed"],
            sbx_eta=opt["sbx_eta"],
            poly_eta=opt["poly_eta"],
        )
        initial = None
        if seed_front:
            front = ParetoFront.from_json(Path(seed_front).read_text())
            initial = seed_from_front(front, ga_config)

        if algorithm == "tga":
            ev = NominalEvaluator(
                system, objective, cfg["field"]["fixed_amplitude"], cfg["field"]["duration"]
            )
            res = tga_optimize(ev, ga_config, initial_population=initial)
            (out_dir / "trace.csv").write_text(res.diversity.to_csv())
            best = {
                "fitness": res.best.fitness,
                "frequencies": res.best.genes[: ga_config.n_modes].tolist(),
                "phases": res.best.genes[ga_config.n_modes :].tolist(),
            }
            (out_dir / "best.json").write_text(json.dumps(best, indent=2))
        elif algorithm == "acromuse":
            amp_params = [
                p for p in build_uncertain_parameters(cfg) if isinstance(p.target, ModeAmplitude)
            ]
            if not amp_params:
                amp_params = [default_amplitude_noise(k) for k in range(cfg["field"]["n_modes"])]
            ev = NoisyAmplitudeEvaluator(
                system, objective, MomentSpec(tuple(amp_params)),
                cfg["field"]["fixed_amplitude"], cfg["field"]["duration"],
            )
            res = acromuse_optimize(ev, ga_config, initial_population=initial)
            (out_dir / "trace.csv").write_text(res.diversity.to_csv())
            keep = retain_distinct(res.population, res.fitness, 4)
            sols = res.population[keep]
            inst_seeds = [int(s) for s in np.random.SeedSequence((cfg["seed"], 0x1757)).generate_state(4)]
            tablep = instance_table(ev.frozen_instance, sols, inst_seeds)
            rows = ["solution," + ",".join(f"instance{i+1}" for i in range(len(inst_seeds)))]
            for r in range(sols.shape[0]):
                rows.append(f"x{r+1}," + ",".join(f"{v:.4f}" for v in tablep[r]))
            (out_dir / "instance_table.csv").write_text("\n".join(rows) + "\n")
            pop_rows = ["fitness," + ",".join(
                [f"omega_{i}" for i in range(ga_config.n_modes)]
                + [f"phase_{i}" for i in range(ga_config.n_modes)]
            )]
            for f, g in zip(res.fitness, res.population):
                pop_rows.append(f"{f:.8g}," + ",".join(f"{x:.10g}" for x in g))
            (out_dir / "population.csv").write_text("\n".join(pop_rows) + "\n")
        else:
            dip_params = [
                p for p in build_uncertain_parameters(cfg) if isinstance(p.target, DipoleElement)
            ]
            if not dip_params:
                raise ConfigError("nsga2 needs dipole uncertainty entries")
            ev = DipoleMomentEvaluator(
                system, objective, MomentSpec(tuple(dip_params)),
                cfg["field"]["fixed_amplitude"], cfg["field"]["duration"],
                halfwidth=cfg["moments"]["halfwidth"],
                confidence=cfg["moments"]["confidence"],
                mc_base_steps=cfg["mc"]["base_steps"],
            )
            front = nsga2_optimize(ev, ga_config)
            (out_dir / "front.json").write_text(front.to_json())
            (out_dir / "front.csv").write_text(front.to_csv())
        _finish(out_dir, f"optimize-{algorithm}", cfg, t0)
    except QRobustError as e:
        raise SystemExit(_fail(e))


@main.group()
def verify():
    """Optimality verification commands."""


@verify.command("pmp")
@click.option("--expected/--no-expected", default=False,
              help="Also compute the expected-objective gradient trace.")
@click.pass_context
def verify_pmp(ctx, expected):
    """Gradient traces and first-order optimality residuals."""
    try:
        cfg, out_dir, t0 = _prepare(ctx, "verify-pmp")
        system = build_system(cfg)
        fld = build_field(cfg)
        grid = build_grid(cfg)
        objective = build_objective(cfg)
        trace = nominal_gradient(system, fld, objective, grid)
        (out_dir / "gradient.csv").write_text(trace.to_csv())
        report = {"nominal_residual": pmp_residual(trace)}
        if expected:
            spec = build_moment_spec(cfg)
            dip = [p for p in spec.parameters if isinstance(p.target, DipoleElement)]
            if not dip:
                raise ConfigError("expected gradient needs dipole uncertainty entries")
            spec = MomentSpec(tuple(dip))
            scheme = _encoding_scheme(cfg, spec.parameters)
            enc = cfg["encoding"]
            etrace = expected_gradient(
                system, fld, scheme, spec, objective, grid,
                encode_radius=enc["radius"], alias_tol=enc["alias_tol"],
            )
            (out_dir / "expected-gradient.csv").write_text(etrace.to_csv())
            report["expected_residual"] = pmp_residual(etrace)
        (out_dir / "report.json").write_text(json.dumps(report, indent=2))
        _finish(out_dir, "verify-pmp", cfg, t0)
    except QRobustError as e:
        raise SystemExit(_fail(e))


@main.group()
def repro():
    """Reproduction checks against the bundled benchmark reference tables."""


def _load_table(name: str) -> np.ndarray:
    ref = importlib.resources.files("qrobust.data.paper_tables") / name
    rows = []
    with ref.open() as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(x) for x in line.split(",")])
            except ValueError:
                continue  # header
    return np.array(rows)


def table3_matrices(grid_steps: int = 4000):
    """Computed 4x4 transfer matrices under each mapping hypothesis.

    Mappings combine the two row-layout readings of the solution table
    (frequencies first vs phases first) with the two readings of the
    amplitude table columns (per noisy instance vs per solution).
    """
    from .system import QuantumSystem, example_system
    from .propagation import TimeGrid

    system = example_system()
    sols = _load_table("table2_solutions.csv")  # (14, 4)
    amps = _load_table("table4_amplitudes.csv")  # (7, 4)
    ref = _load_table("table3_probabilities.csv")  # (4, 4)
    grid = TimeGrid(grid_steps, 40.0)
    out = {}
    for layout in ("freq_first", "phase_first"):
        for amp_key in ("instance", "solution"):
            mat = np.empty((4, 4))
            for j in range(4):
                if layout == "freq_first":
                    w, ph = sols[:7, j], sols[7:, j]
                else:
                    ph, w = sols[:7, j], sols[7:, j]
                for i in range(4):
                    a = amps[:, i] if amp_key == "instance" else amps[:, j]
                    fld = ControlField(a, w, ph, 40.0)
                    res = propagate(system, fld, grid)
                    mat[j, i] = abs(res.final_unitary[3, 0]) ** 2
            out[f"{layout}/{amp_key}"] = mat
    return out, ref


@repro.command("table3")
@click.pass_context
def repro_table3(ctx):
    """Recompute the benchmark probability table under each mapping."""
    try:
        cfg, out_dir, t0 = _prepare(ctx, "repro-table3")
        computed, ref = table3_matrices(grid_steps=cfg["grid"]["n_steps"])
        report = {"reference": ref.tolist(), "mappings": {}}
        best_name, best_err = None, np.inf
        for name, mat in computed.items():
            err = float(np.abs(mat - ref).max())
            winners = np.argmax(mat, axis=0)  # per-instance winner
            diag = bool(np.array_equal(winners, np.arange(4)))
            report["mappings"][name] = {
                "matrix": mat.tolist(),
                "max_abs_error": err,
                "per_instance_winners": winners.tolist(),
                "diagonal_winners": diag,
            }
            fname = "computed_table3_" + name.replace("/", "_") + ".csv"
            rows = [",".join(f"{v:.4f}" for v in r) for r in mat]
            (out_dir / fname).write_text("\n".join(rows) + "\n")
            if err < best_err:
                best_name, best_err = name, err
        report["best_mapping"] = best_name
        report["best_max_abs_error"] = best_err
        report["value_match"] = best_err <= 0.05
        report["structure_match"] = any(
            m["diagonal_winners"] for m in report["mappings"].values()
        )
        (out_dir / "table3_report.json").write_text(json.dumps(report, indent=2))
        _finish(out_dir, "repro-table3", cfg, t0)
    except QRobustError as e:
        raise SystemExit(_fail(e))


if __name__ == "__main__":
    main()
