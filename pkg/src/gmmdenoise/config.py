"""Strict JSON experiment configuration.

Unknown keys, type mismatches, and missing required fields are hard errors
naming the offending dotted path, so experiment definitions cannot drift
silently.  Loading resolves every default into the dictionary; the resolved
form is its own fixed point (loading and re-echoing it is byte-identical)
and is written next to the outputs for reproducibility.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

MODES = ("gen", "fit", "verify", "bench", "report")
ALGORITHMS = ("two_stage", "projected", "warm_start_k", "em", "gradient_em", "power_iter")


class ConfigError(ValueError):
    """Malformed experiment configuration; message names the field."""


def _require(cond, path, msg):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def _check_keys(obj: dict, allowed, path):
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}; allowed: {sorted(allowed)}")


def _opt_number(obj, key, path, default=None, positive=False):
    if key not in obj or obj[key] is None:
        return default
    v = obj[key]
    _require(isinstance(v, (int, float)) and not isinstance(v, bool), f"{path}.{key}", "expected a number")
    v = float(v)
    _require(math.isfinite(v), f"{path}.{key}", "must be finite")
    if positive:
        _require(v > 0, f"{path}.{key}", "must be > 0")
    return v


def _opt_int(obj, key, path, default=None, minimum=None):
    if key not in obj or obj[key] is None:
        return default
    v = obj[key]
    _require(isinstance(v, int) and not isinstance(v, bool), f"{path}.{key}", "expected an integer")
    if minimum is not None:
        _require(v >= minimum, f"{path}.{key}", f"must be >= {minimum}")
    return v


_MIXTURE_KEYS = ("file", "symmetric_pair", "d", "k", "norm", "centers", "separation")
_DATA_KEYS = ("n", "file", "truth_file")
_STAGE_KEYS = ("t", "eta", "steps", "batch_size", "projection_radius", "resample")
_BENCH_KEYS = ("d", "norm", "n", "separation")
_THRESH_KEYS = ("final_error", "tan_angle", "contraction", "contraction_slack", "min_pass")
_TOP_KEYS = (
    "mode", "algorithm", "mixture", "data", "stages", "eps_target", "warm_offset",
    "steps", "eta", "seeds", "threads", "output_dir", "thresholds", "bench", "checks",
    "defaults",
)

# analysis constants baked into the solvers; echoed into every resolved
# config so experiment definitions carry them explicitly
SOLVER_DEFAULTS = {
    "eta_high": 1.0 / 20.0,
    "eta_low": 0.05,
    "t_low": 0.1,
    "eta_warm_start_per_k": 2.0 / 3.0,
}


def _norm_stage(stage: dict, path: str) -> dict:
    _require(isinstance(stage, dict), path, "expected an object")
    _check_keys(stage, _STAGE_KEYS, path)
    out = {
        "t": _opt_number(stage, "t", path, positive=True),
        "eta": _opt_number(stage, "eta", path),
        "steps": _opt_int(stage, "steps", path, minimum=1),
        "batch_size": _opt_int(stage, "batch_size", path, minimum=1),
        "projection_radius": _opt_number(stage, "projection_radius", path, positive=True),
        "resample": stage.get("resample", "fresh_minibatch"),
    }
    _require(out["resample"] in ("fresh_minibatch", "full_batch"), f"{path}.resample",
             "must be fresh_minibatch or full_batch")
    if out["eta"] is not None:
        _require(out["eta"] >= 0, f"{path}.eta", "must be >= 0")
    return out


@dataclass
class ExperimentConfig:
    mode: str
    algorithm: Optional[str]
    mixture: dict
    data: dict
    stages: list
    eps_target: Optional[float]
    warm_offset: float
    steps: Optional[int]
    eta: Optional[float]
    seeds: list
    threads: int
    output_dir: str
    thresholds: dict
    bench: dict
    checks: list = field(default_factory=list)

    def resolved_dict(self) -> dict:
        return {
            "mode": self.mode,
            "algorithm": self.algorithm,
            "mixture": self.mixture,
            "data": self.data,
            "stages": self.stages,
            "eps_target": self.eps_target,
            "warm_offset": self.warm_offset,
            "steps": self.steps,
            "eta": self.eta,
            "seeds": self.seeds,
            "threads": self.threads,
            "output_dir": self.output_dir,
            "thresholds": self.thresholds,
            "bench": self.bench,
            "checks": self.checks,
            "defaults": dict(SOLVER_DEFAULTS),
        }

    def echo(self) -> str:
        return json.dumps(self.resolved_dict(), sort_keys=True, indent=2) + "\n"


def parse_config(doc: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    _require(isinstance(doc, dict), "<root>", "top level must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "<root>")
    mode = doc.get("mode")
    _require(mode in MODES, "mode", f"required, one of {MODES}")

    algorithm = doc.get("algorithm")
    if mode in ("fit", "bench"):
        _require(algorithm in ALGORITHMS, "algorithm", f"required for {mode}, one of {ALGORITHMS}")
    elif algorithm is not None:
        _require(algorithm in ALGORITHMS, "algorithm", f"one of {ALGORITHMS}")

    mixture = doc.get("mixture", {})
    _require(isinstance(mixture, dict), "mixture", "expected an object")
    _check_keys(mixture, _MIXTURE_KEYS, "mixture")
    if "file" in mixture:
        path = base_dir / str(mixture["file"])
        _require(path.exists(), "mixture.file", f"file not found: {path}")
    if "centers" in mixture:
        _require(isinstance(mixture["centers"], list), "mixture.centers", "expected a list of rows")

    data = doc.get("data", {})
    _require(isinstance(data, dict), "data", "expected an object")
    _check_keys(data, _DATA_KEYS, "data")
    _opt_int(data, "n", "data", minimum=1)

    stages_raw = doc.get("stages", [])
    _require(isinstance(stages_raw, list), "stages", "expected a list")
    stages = [_norm_stage(s, f"stages[{i}]") for i, s in enumerate(stages_raw)]

    seeds_raw = doc.get("seeds")
    _require(isinstance(seeds_raw, list) and len(seeds_raw) >= 1, "seeds", "need at least one seed")
    seeds = []
    for i, s in enumerate(seeds_raw):
        if isinstance(s, int) and not isinstance(s, bool):
            seeds.append([s, 0])
        elif (isinstance(s, list) and len(s) == 2
              and all(isinstance(v, int) and not isinstance(v, bool) for v in s)):
            seeds.append([s[0], s[1]])
        else:
            raise ConfigError(f"seeds[{i}]: expected an integer or [seed, stream] pair")

    thresholds = doc.get("thresholds", {})
    _require(isinstance(thresholds, dict), "thresholds", "expected an object")
    _check_keys(thresholds, _THRESH_KEYS, "thresholds")

    bench = doc.get("bench", {})
    _require(isinstance(bench, dict), "bench", "expected an object")
    _check_keys(bench, _BENCH_KEYS, "bench")
    for key, vals in bench.items():
        _require(isinstance(vals, list) and vals, f"bench.{key}", "expected a nonempty list")

    checks = doc.get("checks", [])
    _require(isinstance(checks, list), "checks", "expected a list of check names")

    if "defaults" in doc:
        # informational echo block; tolerated on input, always re-emitted canonically
        _require(isinstance(doc["defaults"], dict), "defaults", "expected an object")
        _check_keys(doc["defaults"], SOLVER_DEFAULTS, "defaults")

    threads = _opt_int(doc, "threads", "<root>", default=1, minimum=1)

    return ExperimentConfig(
        mode=mode,
        algorithm=algorithm,
        mixture=mixture,
        data=data,
        stages=stages,
        eps_target=_opt_number(doc, "eps_target", "<root>", positive=True),
        warm_offset=_opt_number(doc, "warm_offset", "<root>", default=0.5, positive=True) or 0.5,
        steps=_opt_int(doc, "steps", "<root>", minimum=1),
        eta=_opt_number(doc, "eta", "<root>"),
        seeds=seeds,
        threads=threads,
        output_dir=str(doc.get("output_dir", "out")),
        thresholds={k: float(v) for k, v in thresholds.items()},
        bench=bench,
        checks=[str(c) for c in checks],
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    return parse_config(doc, base_dir=path.parent)
