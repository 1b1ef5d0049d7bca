"""Synthetic repeated-measures curves and the three-method benchmark.

Curves follow ``x_ik(t) = m_k(t) + a_i sin(pi t) + eps``, with one subject
effect ``a_i`` shared by all of subject ``i``'s curves. Random numbers come
from numpy's PCG64 generator; replicate streams are spawned from the master
seed with ``SeedSequence`` so results do not depend on the worker count.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .basis import CurveDataset, build_basis, fit_regression_splines, sample_matrix
from .errors import DataError, FplsdaError, ParameterError, RangeError
from .modelselect import DEFAULT_LAMBDAS, DEFAULT_Q, CvGrid, cross_validate, holdout_evaluate

log = logging.getLogger(__name__)

METHODS = ("LDA-MPLS", "FLDA-MFPLS", "FLDA-PenMFPLS")
METHOD_VARIANT = {"LDA-MPLS": "mpls", "FLDA-MFPLS": "fpls", "FLDA-PenMFPLS": "penfpls"}
BENCH_HEADER = ("replicate", "method", "lambda", "q", "ccr_cv", "ccr_test")


@dataclass(frozen=True)
class SimConfig:
    n_subjects: int = 40
    K: int = 3
    grid_size: int = 101
    sigma_eps: float = 0.2
    sigma_s: float = 0.02
    mu_range: tuple[float, float] = (0.0, 0.05)
    train_subjects: int = 30
    test_subjects: int = 10
    seed: int = 0
    subject_effect: bool = True

    def __post_init__(self):
        if self.K < 2:
            raise ParameterError("K must be at least 2")
        if self.grid_size < 2:
            raise ParameterError("grid_size must be at least 2")
        if self.train_subjects + self.test_subjects != self.n_subjects:
            raise ParameterError(
                f"train ({self.train_subjects}) + test ({self.test_subjects}) "
                f"must equal the subject pool ({self.n_subjects})"
            )
        if self.train_subjects < 1 or self.test_subjects < 0:
            raise ParameterError("need at least one training subject")
        if self.sigma_eps < 0 or self.sigma_s < 0:
            raise ParameterError("noise standard deviations must be nonnegative")
        lo, hi = self.mu_range
        if lo > hi:
            raise ParameterError("mu_range must be increasing")


def mean_curve(k: int, t):
    """``t**(k/5) * (1 - t)**(6 - k/5)`` on ``[0, 1]``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any((t_arr < 0) | (t_arr > 1)) or not np.all(np.isfinite(t_arr)):
        raise RangeError("mean curves are defined on [0, 1]")
    e = k / 5
    out = t_arr**e * (1 - t_arr) ** (6 - e)
    return float(out) if np.ndim(t) == 0 else out


def subject_ids(n: int) -> list[str]:
    width = max(3, len(str(n)))
    return [f"s{i:0{width}d}" for i in range(1, n + 1)]


def generate(config: SimConfig) -> CurveDataset:
    """Draw one dataset; identical configs give bit-identical data."""
    rng = np.random.default_rng(config.seed)
    t = np.linspace(0.0, 1.0, config.grid_size)
    means = [mean_curve(k, t) for k in range(1, config.K + 1)]
    shape = np.sin(np.pi * t)
    lo, hi = config.mu_range
    conditions = tuple(str(k) for k in range(1, config.K + 1))
    subjects = subject_ids(config.n_subjects)
    if not config.subject_effect:
        shape = np.zeros_like(t)
    curves = {}
    for s in subjects:
        mu = rng.uniform(lo, hi)
        a = rng.normal(mu, config.sigma_s)
        eps = rng.normal(0.0, config.sigma_eps, size=(config.K, config.grid_size))
        for k, c in enumerate(conditions):
            curves[s, c] = (t, means[k] + a * shape + eps[k])
    return CurveDataset(tuple(subjects), conditions, curves)


def train_test_split(data: CurveDataset, config: SimConfig) -> tuple[CurveDataset, CurveDataset | None]:
    train = data.subset(data.subjects[: config.train_subjects])
    test = data.subset(data.subjects[config.train_subjects :]) if config.test_subjects else None
    return train, test


def replicate_seeds(seed: int, replicates: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(replicates)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


@dataclass(frozen=True)
class BenchSettings:
    degree: int = 3
    knots: int = 15
    penalty_order: int = 2
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS
    q_values: tuple[int, ...] = DEFAULT_Q


def run_replicate(index: int, seed: int, config: SimConfig, methods, settings: BenchSettings) -> list[dict]:
    cfg = replace(config, seed=seed)
    train_d, test_d = train_test_split(generate(cfg), cfg)
    if test_d is None:
        raise ParameterError("the benchmark needs test subjects")
    basis = build_basis(settings.degree, settings.knots, (0.0, 1.0), settings.penalty_order)
    records = []
    for method in methods:
        variant = METHOD_VARIANT[method]
        rec = {"replicate": index, "method": method, "lambda": math.nan, "q": -1,
               "ccr_cv": math.nan, "ccr_test": math.nan}
        try:
            if variant == "mpls":
                train, _ = sample_matrix(train_d)
                test, _ = sample_matrix(test_d)
                b = None
                grid = CvGrid((), settings.q_values)
            else:
                train = fit_regression_splines(basis, train_d)
                test = fit_regression_splines(basis, test_d)
                b = basis
                grid = CvGrid(settings.lambdas if variant == "penfpls" else (), settings.q_values)
            cv = cross_validate(train, b, grid)
            lam, q, ccr_cv = cv.best
            ccr_test, _, model = holdout_evaluate(train, test, b, lam, q, variant)
            rec.update({"lambda": lam, "q": model.q, "ccr_cv": ccr_cv, "ccr_test": ccr_test})
        except FplsdaError as exc:
            log.warning("replicate %d, %s failed: %s", index, method, exc)
        records.append(rec)
    return records


def _replicate_task(args):
    return run_replicate(*args)


def run_benchmark(
    config: SimConfig,
    replicates: int,
    methods=METHODS,
    settings: BenchSettings | None = None,
    n_jobs: int = 1,
) -> list[dict]:
    """Per-replicate records ``(replicate, method, lambda, q, ccr_cv, ccr_test)``.

    Records are sorted by replicate index, then by method order.
    """
    if replicates < 1:
        raise ParameterError("replicates must be at least 1")
    methods = tuple(methods)
    unknown = [m for m in methods if m not in METHOD_VARIANT]
    if unknown or not methods:
        raise ParameterError(f"unknown method(s) {unknown}; choose from {METHODS}")
    settings = settings or BenchSettings()
    seeds = replicate_seeds(config.seed, replicates)
    tasks = [(i, s, config, methods, settings) for i, s in enumerate(seeds, start=1)]
    if n_jobs > 1 and replicates > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            chunks = list(pool.map(_replicate_task, tasks))
    else:
        chunks = [_replicate_task(t) for t in tasks]
    return [rec for chunk in chunks for rec in chunk]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_records(records: list[dict], path: str | Path) -> None:
    try:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BENCH_HEADER)
            for r in records:
                w.writerow([_fmt(r[k]) for k in BENCH_HEADER])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from exc


def read_records(path: str | Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {
            "replicate": int(r["replicate"]),
            "method": r["method"],
            "lambda": float(r["lambda"]),
            "q": int(r["q"]),
            "ccr_cv": float(r["ccr_cv"]),
            "ccr_test": float(r["ccr_test"]),
        }
        for r in rows
    ]


SUMMARY_METRICS = ("ccr_cv", "ccr_test", "q")
SUMMARY_HEADER = ("method", "metric", "n", "min", "q1", "median", "q3", "max")


def summarize(records: list[dict]) -> list[dict]:
    """Five-number summaries (linear-interpolation quartiles) per method and metric."""
    out = []
    methods = [m for m in METHODS if any(r["method"] == m for r in records)]
    for m in methods:
        for metric in SUMMARY_METRICS:
            vals = np.array(
                [r[metric] for r in records if r["method"] == m and not math.isnan(r["ccr_test"])],
                dtype=float,
            )
            if vals.size == 0:
                continue
            q0, q1, q2, q3, q4 = np.percentile(vals, [0, 25, 50, 75, 100])
            out.append({"method": m, "metric": metric, "n": int(vals.size), "min": float(q0),
                        "q1": float(q1), "median": float(q2), "q3": float(q3), "max": float(q4)})
    return out


def write_summary(summary: list[dict], path: str | Path) -> None:
    try:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_HEADER)
            for row in summary:
                w.writerow([_fmt(row[k]) for k in SUMMARY_HEADER])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from exc
