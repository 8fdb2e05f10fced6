"""Command-line front end: gen, fit, verify, bench, report.

All randomness flows from the config seeds; summary documents contain no
timing, so a rerun with the same config is byte-identical (trajectory rows
carry elapsed_ns as their last field for profiling and are identical apart
from it).  Exit codes: 0 success, 1 a verify check failed, 2 usage or
config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io as dataio
from .config import ALGORITHMS, ConfigError, ExperimentConfig, load_config
from .core import MixtureParams, make_noise_scale, sample_mixture
from .baselines import em_fit, power_iteration_fit
from .diagnostics import format_check_table, run_default_checks
from .optim import (
    FitReport,
    GdConfig,
    default_projected_config,
    default_two_stage_configs,
    gmm_denoiser,
    projected_gd_fit,
    symmetrize_two_component,
    two_stage_fit,
    warm_start_k_fit,
)
from .rng import RngSeed

DEFAULT_ETA_HIGH = 1.0 / 20.0
DEFAULT_ETA_LOW = 0.05
DEFAULT_T_LOW = 0.1


class CliError(Exception):
    """Fatal usage-level problem; maps to exit code 2."""


def _finite_or_none(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def build_mixture(cfg: ExperimentConfig, base_dir: Path) -> MixtureParams:
    spec = cfg.mixture
    if not spec:
        raise CliError("config has no mixture section")
    if "file" in spec:
        return dataio.read_mixture(base_dir / str(spec["file"]))
    if "centers" in spec:
        centers = np.asarray(spec["centers"], dtype=float)
        if spec.get("symmetric_pair", False):
            return MixtureParams.symmetric(centers.reshape(-1))
        return MixtureParams.general(centers)
    d = spec.get("d")
    if d is None:
        raise CliError("mixture needs file, centers, or d")
    if spec.get("symmetric_pair", True) and "norm" in spec:
        mu = np.zeros(int(d))
        mu[0] = float(spec["norm"])
        return MixtureParams.symmetric(mu)
    if "separation" in spec:
        k = int(spec.get("k", 2))
        sep = float(spec["separation"])
        centers = np.zeros((k, int(d)))
        for i in range(k):
            centers[i, i] = sep / math.sqrt(2.0)
        return MixtureParams.general(centers)
    raise CliError("mixture spec needs norm (symmetric pair) or separation (K components)")


def _stage_to_config(stage: dict, rng: RngSeed, dflt: GdConfig) -> GdConfig:
    return GdConfig(
        scale=make_noise_scale(stage["t"]) if stage["t"] is not None else dflt.scale,
        eta=stage["eta"] if stage["eta"] is not None else dflt.eta,
        steps=stage["steps"] if stage["steps"] is not None else dflt.steps,
        batch_size=stage["batch_size"] if stage["batch_size"] is not None else dflt.batch_size,
        rng=rng,
        projection_radius=stage["projection_radius"] if stage["projection_radius"] is not None
        else dflt.projection_radius,
        resample=stage["resample"],
    )


def median_qualified_ratio(trajectory):
    """Median contraction ratio over steps above ten times the trailing floor."""
    dists = [r.dist for r in trajectory]
    if not dists or any(v is None for v in dists):
        return None
    floor = float(np.median(dists[-max(3, len(dists) // 4):]))
    ratios = [
        r.contraction_ratio
        for r in trajectory
        if r.contraction_ratio is not None
        and r.contraction_ratio > 0
        and r.dist / r.contraction_ratio >= 10.0 * floor
    ]
    return float(np.median(ratios)) if ratios else None


def run_algorithm(cfg: ExperimentConfig, data, truth, seed: RngSeed):
    """One (algorithm, seed) run; returns (FitReport | None, per-seed summary dict)."""
    algorithm = cfg.algorithm
    d = data.shape[1]
    summary = {"seed": [seed.seed, seed.stream]}

    if algorithm in ("two_stage", "projected", "em", "power_iter"):
        centered, shift = symmetrize_two_component(data)
        summary["mean_shift_norm"] = float(np.linalg.norm(shift))
    else:
        centered = data

    if algorithm == "two_stage":
        dflt_high, dflt_low = default_two_stage_configs(centered, seed)
        cfg_high = _stage_to_config(cfg.stages[0], dflt_high.rng, dflt_high) if len(cfg.stages) > 0 else dflt_high
        cfg_low = _stage_to_config(cfg.stages[1], dflt_low.rng, dflt_low) if len(cfg.stages) > 1 else dflt_low
        report = two_stage_fit(centered, cfg_high, cfg_low, rng=seed, truth=truth)
        b1, _ = report.stage_metadata["stage_boundaries"]
        if truth is not None:
            s1 = report.trajectory[b1 - 1].iterate[0]
            mu_star = truth.centers[0]
            summary["stage1_correlation"] = float(
                abs(s1 @ mu_star) / (np.linalg.norm(s1) * np.linalg.norm(mu_star))
            )
    elif algorithm == "projected":
        kwargs = {}
        if cfg.eps_target is not None:
            kwargs["eps_target"] = cfg.eps_target
        dflt = default_projected_config(centered, seed, **kwargs)
        gd = _stage_to_config(cfg.stages[0], dflt.rng, dflt) if cfg.stages else dflt
        report = projected_gd_fit(centered, gd, rng=seed, truth=truth)
    elif algorithm == "warm_start_k":
        if truth is None:
            raise CliError("warm_start_k needs a truth file to build the warm init")
        gen = seed.substream(3).generator()
        dirs = gen.standard_normal(truth.centers.shape)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        init = MixtureParams.general(truth.centers + cfg.warm_offset * dirs)
        dflt = GdConfig(
            scale=make_noise_scale(0.2), eta=2.0 * init.k / 3.0, steps=25,
            batch_size=8192, rng=seed.substream(1),
        )
        gd = _stage_to_config(cfg.stages[0], dflt.rng, dflt) if cfg.stages else dflt
        report = warm_start_k_fit(data, init, gd, truth=truth)
    elif algorithm in ("em", "gradient_em"):
        steps = cfg.steps or 50
        if algorithm == "em" and truth is not None and truth.symmetric_pair:
            theta0 = MixtureParams.symmetric(seed.substream(0).generator().standard_normal(d))
            final, records = em_fit(theta0, centered, steps, truth=truth)
        else:
            if truth is None:
                raise CliError(f"{algorithm} needs a truth file to build the warm init")
            gen = seed.substream(3).generator()
            dirs = gen.standard_normal(truth.centers.shape)
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            theta0 = MixtureParams.general(truth.centers + cfg.warm_offset * dirs)
            eta = cfg.eta if algorithm == "gradient_em" else None
            if algorithm == "gradient_em" and eta is None:
                eta = 2.0 * theta0.k / 3.0
            final, records = em_fit(theta0, data, steps, truth=truth, eta=eta)
        report = FitReport(final_estimate=final, trajectory=records,
                           stage_metadata={"stages": [{"algorithm": algorithm, "steps": steps}]})
    elif algorithm == "power_iter":
        steps = cfg.steps or 50
        direction = truth.centers[0] / np.linalg.norm(truth.centers[0]) if truth is not None else None
        vec, records = power_iteration_fit(centered, steps, seed.substream(1), truth_direction=direction)
        report = FitReport(final_estimate=MixtureParams.symmetric(vec), trajectory=records,
                           stage_metadata={"stages": [{"algorithm": "power_iter", "steps": steps}]})
        if records and records[-1].tan_angle is not None:
            summary["final_tan"] = _finite_or_none(records[-1].tan_angle)
    else:
        raise CliError(f"unknown algorithm {algorithm!r}")

    if truth is not None and algorithm != "power_iter":
        summary["final_error"] = report.final_distance(truth)
        last = report.trajectory[-1]
        summary["final_tan"] = _finite_or_none(last.tan_angle)
        summary["median_contraction"] = median_qualified_ratio(report.trajectory)
    return report, summary


def write_trajectory(path: Path, report: FitReport) -> None:
    with open(path, "w") as fh:
        for r in report.trajectory:
            row = r.to_json_dict()
            for key in ("loss", "tan_angle", "dist", "contraction_ratio"):
                row[key] = _finite_or_none(row[key])
            fh.write(json.dumps(row) + "\n")


def _echo_config(cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(cfg.echo())


def cmd_gen(cfg: ExperimentConfig, base_dir: Path) -> int:
    out = Path(cfg.output_dir)
    truth = build_mixture(cfg, base_dir)
    n = cfg.data.get("n")
    if n is None:
        raise CliError("gen needs data.n")
    seed = RngSeed(*cfg.seeds[0])
    x = sample_mixture(truth, int(n), seed.substream(98))
    _echo_config(cfg, out)
    dataio.write_dataset(out / "data.mxs", x)
    dataio.write_mixture(out / "truth.json", truth)
    print(f"wrote {out / 'data.mxs'} ({n} x {truth.d}) and {out / 'truth.json'}")
    return 0


def _load_data_and_truth(cfg: ExperimentConfig, base_dir: Path):
    out = Path(cfg.output_dir)
    data_file = cfg.data.get("file")
    path = base_dir / data_file if data_file else out / "data.mxs"
    if not Path(path).exists():
        raise CliError(f"dataset not found: {path} (run gen first or set data.file)")
    data = dataio.read_csv_dataset(path) if str(path).endswith(".csv") else dataio.read_dataset(path)
    truth = None
    truth_file = cfg.data.get("truth_file")
    tpath = base_dir / truth_file if truth_file else out / "truth.json"
    if Path(tpath).exists():
        truth = dataio.read_mixture(tpath)
    return data, truth


def cmd_fit(cfg: ExperimentConfig, base_dir: Path) -> int:
    out = Path(cfg.output_dir)
    data, truth = _load_data_and_truth(cfg, base_dir)
    _echo_config(cfg, out)
    seeds = [RngSeed(*s) for s in cfg.seeds]

    def one(seed):
        return run_algorithm(cfg, data, truth, seed)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]

    per_seed = []
    for seed, (report, summary) in zip(seeds, results):
        write_trajectory(out / f"trajectory_seed{seed.seed}_{seed.stream}.jsonl", report)
        per_seed.append(summary)

    summary = {"algorithm": cfg.algorithm, "n_data": int(data.shape[0]), "d": int(data.shape[1]),
               "per_seed": per_seed}
    errs = [s.get("final_error") for s in per_seed if s.get("final_error") is not None]
    if errs:
        thr = cfg.thresholds.get("final_error")
        summary["aggregate"] = {
            "median_final_error": float(np.median(errs)),
            "max_final_error": float(np.max(errs)),
        }
        if thr is not None:
            summary["aggregate"]["final_error_threshold"] = thr
            summary["aggregate"]["seeds_within_threshold"] = int(sum(e <= thr for e in errs))
        ratios = [s.get("median_contraction") for s in per_seed if s.get("median_contraction") is not None]
        if ratios:
            summary["aggregate"]["median_contraction"] = float(np.median(ratios))
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(json.dumps(summary.get("aggregate", {}), sort_keys=True))
    return 0


def cmd_verify(cfg: ExperimentConfig, base_dir: Path, check: str | None) -> int:
    out = Path(cfg.output_dir)
    _echo_config(cfg, out)
    names = [c.strip() for c in check.split(",")] if check else (cfg.checks or None)
    seed = RngSeed(*cfg.seeds[0])
    reports = run_default_checks(seed, names=names)
    with open(out / "checks.jsonl", "w") as fh:
        for r in reports:
            doc = r.to_json_dict()
            for key in ("observed", "threshold", "mc_std_err"):
                doc[key] = _finite_or_none(doc[key])
            fh.write(json.dumps(doc) + "\n")
    print(format_check_table(reports))
    failed = [r for r in reports if r.applicable and not r.passed]
    if failed:
        print(f"{len(failed)} check(s) FAILED: {[r.name for r in failed]}", file=sys.stderr)
        return 1
    return 0


def cmd_bench(cfg: ExperimentConfig, base_dir: Path) -> int:
    out = Path(cfg.output_dir)
    _echo_config(cfg, out)
    grid = cfg.bench or {"d": [8], "norm": [1.5], "n": [20000]}
    ds = grid.get("d", [8])
    norms = grid.get("norm", [1.5])
    ns = grid.get("n", [20000])
    seps = grid.get("separation", [None])
    cells = [
        (d, norm, n, sep, s)
        for d in ds for norm in norms for n in ns for sep in seps for s in cfg.seeds
    ]

    def one_cell(cell):
        d, norm, n, sep, s = cell
        seed = RngSeed(*s)
        if sep is None:
            mu = np.zeros(int(d))
            mu[0] = float(norm)
            truth = MixtureParams.symmetric(mu)
        else:
            centers = np.zeros((int(cfg.mixture.get("k", 4)), int(d)))
            for i in range(centers.shape[0]):
                centers[i, i] = float(sep) / math.sqrt(2.0)
            truth = MixtureParams.general(centers)
        data = sample_mixture(truth, int(n), seed.substream(98))
        _, summary = run_algorithm(cfg, data, truth, seed)
        return {
            "algorithm": cfg.algorithm, "d": d, "norm": norm, "n": n,
            "separation": sep if sep is not None else "",
            "seed": seed.seed, "stream": seed.stream,
            "final_error": summary.get("final_error", ""),
            "final_tan": summary.get("final_tan", ""),
            "median_contraction": summary.get("median_contraction", ""),
        }

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(one_cell, cells))
    else:
        rows = [one_cell(c) for c in cells]
    fields = ["algorithm", "d", "norm", "n", "separation", "seed", "stream",
              "final_error", "final_tan", "median_contraction"]
    with open(out / "bench.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {out / 'bench.csv'} ({len(rows)} rows)")
    return 0


def cmd_report(cfg: ExperimentConfig, base_dir: Path) -> int:
    out = Path(cfg.output_dir)
    lines = ["# Experiment report", ""]
    summary_path = out / "summary.json"
    if summary_path.exists():
        doc = json.loads(summary_path.read_text())
        lines += [f"## Fit summary ({doc.get('algorithm')})", ""]
        lines += ["| seed | final_error | final_tan | median_contraction |", "|---|---|---|---|"]
        for s in doc.get("per_seed", []):
            lines.append(
                f"| {s.get('seed')} | {s.get('final_error', '')} | {s.get('final_tan', '')} "
                f"| {s.get('median_contraction', '')} |"
            )
        agg = doc.get("aggregate")
        if agg:
            lines += ["", "```json", json.dumps(agg, sort_keys=True, indent=2), "```", ""]
    checks_path = out / "checks.jsonl"
    if checks_path.exists():
        lines += ["## Diagnostic checks", "", "| check | status | observed | threshold |", "|---|---|---|---|"]
        for line in checks_path.read_text().splitlines():
            doc = json.loads(line)
            status = "pass" if doc["passed"] else ("n/a" if not doc["applicable"] else "FAIL")
            lines.append(f"| {doc['name']} | {status} | {doc['observed']} | {doc['threshold']} |")
        lines.append("")
    bench_path = out / "bench.csv"
    if bench_path.exists():
        with open(bench_path) as fh:
            rows = list(csv.reader(fh))
        if rows:
            lines += ["## Bench", "", "| " + " | ".join(rows[0]) + " |",
                      "|" + "---|" * len(rows[0])]
            lines += ["| " + " | ".join(r) + " |" for r in rows[1:]]
            lines.append("")
    if len(lines) <= 2:
        raise CliError(f"nothing to report in {out} (expected summary.json, checks.jsonl, or bench.csv)")
    (out / "report.md").write_text("\n".join(lines))
    print(f"wrote {out / 'report.md'}")
    return 0


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.out is not None:
        cfg.output_dir = args.out
    if args.seeds is not None:
        try:
            cfg.seeds = [[int(v), 0] for v in args.seeds.split(",") if v.strip()]
        except ValueError as exc:
            raise CliError(f"--seeds expects comma-separated integers: {exc}") from exc
        if not cfg.seeds:
            raise CliError("--seeds produced an empty list")
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmmdenoise",
        description="Learn Gaussian mixture centers by gradient descent on the denoising objective.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("gen", "generate a dataset and truth file from the configured mixture"),
        ("fit", "fit one algorithm over all seeds; writes trajectories and summary"),
        ("verify", "run the diagnostics suite; exit 1 on any failed check"),
        ("bench", "sweep the bench grid; writes a CSV of final errors"),
        ("report", "aggregate prior outputs into a Markdown report"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=(name != "verify"), help="JSON experiment config")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seeds", help="comma-separated seed list (overrides config)")
        p.add_argument("--threads", type=int, help="worker threads for seeds/cells")
        if name == "verify":
            p.add_argument("--check", help="comma-separated check names (default: all)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        if args.config:
            cfg = load_config(args.config)
            base_dir = Path(args.config).parent
        else:
            cfg = load_config_default()
            base_dir = Path(".")
        cfg = _apply_overrides(cfg, args)
        if args.command == "gen":
            return cmd_gen(cfg, base_dir)
        if args.command == "fit":
            return cmd_fit(cfg, base_dir)
        if args.command == "verify":
            return cmd_verify(cfg, base_dir, getattr(args, "check", None))
        if args.command == "bench":
            return cmd_bench(cfg, base_dir)
        if args.command == "report":
            return cmd_report(cfg, base_dir)
        raise CliError(f"unknown command {args.command!r}")
    except (ConfigError, CliError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def load_config_default() -> ExperimentConfig:
    """Config for bare `verify` runs: seed 0, default checks, ./out."""
    from .config import parse_config

    return parse_config({"mode": "verify", "seeds": [0], "output_dir": "out"})


if __name__ == "__main__":
    sys.exit(main())
