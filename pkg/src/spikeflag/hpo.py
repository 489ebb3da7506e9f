"""Seeded random hyperparameter search with multi-metric champion selection.

Trials sample uniformly from fixed ranges, train, evaluate on the test split,
and append one JSON line per trial to the record store, so an interrupted
search resumes by trial index. Selection keeps the best trial per metric plus
the four-metric Pareto front; a repeat protocol re-runs a chosen setting with
consecutive seeds and reports mean and sample standard deviation.
"""

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import data as datamod
from .encoding import EncodingConfig
from .errors import ConfigError, SearchError
from .metrics import EvalRecord
from .network import NetworkConfig
from .training import TrainingConfig, evaluate, train

PARAM_RANGES = {
    "batch_size": (16, 128),
    "epochs": (5, 100),
    "beta": (0.5, 0.99),
    "exposure": (1, 64),
}

METRIC_NAMES = ("accuracy", "auroc", "auprc", "f1")


@dataclass
class SearchConfig:
    n_trials: int
    method: str
    master_seed: int = 0
    max_epochs_cap: int = None     # budget caps for desk-scale runs
    max_exposure_cap: int = None

    def validate(self):
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        EncodingConfig(method=self.method, exposure=2).validate()
        return self


@dataclass
class TrialRecord:
    trial_index: int
    params: dict
    seed: int
    status: str                    # "ok" | "failed"
    metrics: dict = None
    wall_time_seconds: float = 0.0
    error: str = None

    def to_json(self):
        return json.dumps({
            "trial_index": self.trial_index,
            "params": self.params,
            "seed": self.seed,
            "status": self.status,
            "metrics": self.metrics,
            "wall_time_seconds": self.wall_time_seconds,
            "error": self.error,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        return cls(**d)


def sample_trial(rng, method):
    """Uniform params from the search ranges; delta has no exposure knob."""
    lo, hi = PARAM_RANGES["batch_size"]
    params = {"batch_size": int(rng.integers(lo, hi + 1))}
    lo, hi = PARAM_RANGES["epochs"]
    params["epochs"] = int(rng.integers(lo, hi + 1))
    lo, hi = PARAM_RANGES["beta"]
    params["beta"] = float(rng.uniform(lo, hi))
    if method != "delta":
        lo, hi = PARAM_RANGES["exposure"]
        params["exposure"] = int(rng.integers(lo, hi + 1))
    return params


def trial_params(cfg, index):
    """Deterministic params for (master_seed, trial index), caps applied."""
    ss = np.random.SeedSequence([cfg.master_seed, index])
    sample_ss, seed_ss = ss.spawn(2)
    params = sample_trial(np.random.default_rng(sample_ss), cfg.method)
    if cfg.max_epochs_cap is not None:
        params["epochs"] = min(params["epochs"], cfg.max_epochs_cap)
    if cfg.max_exposure_cap is not None and "exposure" in params:
        params["exposure"] = min(params["exposure"], cfg.max_exposure_cap)
    seed = int(seed_ss.generate_state(1)[0])
    return params, seed


def configs_for_params(method, params, patch_size=datamod.DEFAULT_PATCH_SIZE,
                       seed=0):
    """Build the encoding/network/training configs one trial needs."""
    exposure = 1 if method == "delta" else params["exposure"]
    enc_cfg = EncodingConfig(method=method, exposure=exposure, rng_seed=seed)
    enc_cfg.validate()
    doubled_in = method in ("delta", "sf-first", "sf-direct", "sf-latency")
    net_cfg = NetworkConfig(
        input_width=2 * patch_size if doubled_in else patch_size,
        output_width=2 * patch_size if method == "delta" else patch_size,
        beta=params["beta"],
    )
    train_cfg = TrainingConfig(
        batch_size=params["batch_size"],
        max_epochs=params["epochs"],
        seed=seed,
    )
    return enc_cfg, net_cfg, train_cfg


def run_trial(method, params, dataset, seed):
    """Train with the given params and score the test split."""
    enc_cfg, net_cfg, train_cfg = configs_for_params(method, params, seed=seed)
    model, _ = train(net_cfg, dataset.train, train_cfg, enc_cfg)
    record = evaluate(model, net_cfg, dataset.test, enc_cfg)
    return record


def _execute_trial(args):
    data_path, method, params, seed, index = args
    dataset = datamod.load_dataset(data_path)
    started = time.perf_counter()
    try:
        record = run_trial(method, params, dataset, seed)
        return TrialRecord(
            trial_index=index, params=params, seed=seed, status="ok",
            metrics={k: getattr(record, k) for k in METRIC_NAMES},
            wall_time_seconds=time.perf_counter() - started,
        )
    except Exception as exc:
        return TrialRecord(
            trial_index=index, params=params, seed=seed, status="failed",
            wall_time_seconds=time.perf_counter() - started,
            error=f"{type(exc).__name__}: {exc}",
        )


def load_records(path):
    records = []
    if os.path.exists(path):
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(TrialRecord.from_json(line))
    return records


def append_record(path, record):
    with open(path, "a") as fh:
        fh.write(record.to_json() + "\n")
        fh.flush()


def run_search(cfg, data_path, records_path, workers=1, log=None):
    """Run (or resume) the search; returns all records sorted by trial index."""
    cfg.validate()
    existing = {r.trial_index for r in load_records(records_path)}
    todo = [i for i in range(cfg.n_trials) if i not in existing]
    jobs = []
    for index in todo:
        params, seed = trial_params(cfg, index)
        jobs.append((data_path, cfg.method, params, seed, index))

    def note(rec):
        if log:
            state = rec.status if rec.status != "ok" else \
                "f1 {:.3f}".format(rec.metrics["f1"])
            log(f"trial {rec.trial_index:3d}  {state}  "
                f"({rec.wall_time_seconds:.1f}s)")

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_execute_trial, jobs):
                append_record(records_path, rec)
                note(rec)
    else:
        for job in jobs:
            rec = _execute_trial(job)
            append_record(records_path, rec)
            note(rec)
    records = load_records(records_path)
    return sorted(records, key=lambda r: r.trial_index)


def _dominates(a, b):
    """True if metrics a >= b everywhere and > somewhere (maximization)."""
    ge = all(a[m] >= b[m] for m in METRIC_NAMES)
    gt = any(a[m] > b[m] for m in METRIC_NAMES)
    return ge and gt


def select_best(records):
    """Per-metric champions (ties to the earlier trial) plus the Pareto front."""
    ok = sorted((r for r in records if r.status == "ok" and r.metrics),
                key=lambda r: r.trial_index)
    if not ok:
        raise SearchError("no successful trials to select from")
    champions = {}
    for metric in METRIC_NAMES:
        champions[metric] = max(ok, key=lambda r: (r.metrics[metric], -r.trial_index))
    front = [r for r in ok
             if not any(_dominates(o.metrics, r.metrics) for o in ok if o is not r)]
    return {"champions": champions, "pareto_front": front}


def mean_and_std(values):
    """Mean and sample standard deviation (0 for a single value)."""
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


def repeat_eval(method, params, dataset, n_repeats, master_seed=0,
                max_failed_fraction=0.2, log=None):
    """Re-run one setting with seeds master_seed..master_seed+n-1.

    Returns (summary, runs): summary maps metric -> (mean, sample std) over
    successful runs; runs is a list of per-seed result dicts. Aborts when the
    failure fraction exceeds ``max_failed_fraction``.
    """
    if n_repeats < 1:
        raise ConfigError("n_repeats must be >= 1")
    runs = []
    failures = []
    for i in range(n_repeats):
        seed = master_seed + i
        started = time.perf_counter()
        try:
            record = run_trial(method, params, dataset, seed)
            runs.append({
                "method": method, "seed": seed,
                **{k: getattr(record, k) for k in METRIC_NAMES},
                "wall_time_seconds": time.perf_counter() - started,
            })
            if log:
                log(f"repeat seed {seed}  f1 {record.f1:.3f}")
        except Exception as exc:
            failures.append((seed, f"{type(exc).__name__}: {exc}"))
            if log:
                log(f"repeat seed {seed}  FAILED {exc}")
    if n_repeats and len(failures) / n_repeats > max_failed_fraction:
        detail = "; ".join(f"seed {s}: {msg}" for s, msg in failures)
        raise SearchError(
            f"{len(failures)}/{n_repeats} repeats failed ({detail})"
        )
    summary = {m: mean_and_std([r[m] for r in runs]) for m in METRIC_NAMES}
    return summary, runs


def summarize_by_method(run_rows):
    """Aggregate eval-record rows (dicts with method + metrics) per method."""
    by_method = {}
    for row in run_rows:
        by_method.setdefault(row["method"], []).append(row)
    out = []
    for method in sorted(by_method):
        rows = by_method[method]
        entry = {"method": method, "n": len(rows)}
        for metric in METRIC_NAMES:
            mean, std = mean_and_std([r[metric] for r in rows])
            entry[f"{metric}_mean"] = mean
            entry[f"{metric}_std"] = std
        out.append(entry)
    return out
