"""Leave-one-subject-out selection of the smoothing parameter and PLS size."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .basis import BasisSystem, CoefficientMatrix
from .errors import DataError, ParameterError, StructuralError
from .flda import (
    classify_subjects,
    confusion_and_ccr,
    fit_classifier,
    fit_features,
    nearest_centroid,
)
from .mpls import feature_map, project
from .variation import within

log = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (0.0,) + tuple(float(v) for v in np.logspace(-4, 4, 17))
DEFAULT_Q = tuple(range(1, 11))


@dataclass(frozen=True)
class CvGrid:
    """Grid of ``(lambda, q)`` cells and, once evaluated, their CV results.

    An empty ``lambdas`` tuple means the non-penalized fit (lambda fixed at
    0). ``results`` maps each cell to ``(ccr, n_folds)``.
    """

    lambdas: tuple[float, ...] = ()
    q_values: tuple[int, ...] = DEFAULT_Q
    results: dict = field(default_factory=dict, compare=False)
    best: tuple | None = None

    def __post_init__(self):
        lams = tuple(sorted(float(v) for v in self.lambdas))
        if any(not v >= 0 for v in lams):
            raise ParameterError("lambda values must be nonnegative")
        qs = tuple(sorted({int(q) for q in self.q_values}))
        if not qs:
            raise ParameterError("empty q grid")
        if qs[0] < 1:
            raise ParameterError("q values must be positive")
        object.__setattr__(self, "lambdas", lams)
        object.__setattr__(self, "q_values", qs)

    @property
    def cell_lambdas(self) -> tuple[float, ...]:
        return self.lambdas if self.lambdas else (0.0,)

    def rows(self) -> list[tuple[float, int, float]]:
        return [(lam, q, self.results[lam, q][0]) for lam in self.cell_lambdas for q in self.q_values]

    def write_report(self, path: str | Path) -> None:
        path = Path(path)
        try:
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("lambda", "q", "ccr_cv"))
                for lam, q, ccr in self.rows():
                    w.writerow((repr(lam), q, repr(ccr)))
        except OSError as exc:
            raise DataError(f"cannot write {path}: {exc.strerror}") from exc


def select_best(counts: dict, lambdas, q_values) -> tuple[float, int]:
    """Highest count; ties go to smaller q, then larger lambda."""
    best_key = None
    best = None
    for lam in lambdas:
        for q in q_values:
            key = (counts[lam, q], -q, lam)
            if best_key is None or key > best_key:
                best_key, best = key, (lam, q)
    return best


def _variant_for(basis, lambdas) -> str:
    if basis is None:
        return "mpls"
    return "penfpls" if lambdas else "fpls"


def _fold_fit(X_all, y, K, held_out, q_values, variant, lam, transform):
    n_subj = X_all.shape[0] // K
    keep = np.delete(np.arange(n_subj), held_out)
    tr = (keep[:, None] * K + np.arange(K)).ravel()
    return fit_features(X_all[tr], y[tr], K, q_values, variant=variant, lam=lam, transform=transform)


def _fold_counts(X_all, y, K, n_subj, q_values, variant, lam, transform):
    """Correct-classification counts per q over all held-out subjects."""
    counts = dict.fromkeys(q_values, 0)
    for i in range(n_subj):
        pls, fits = _fold_fit(X_all, y, K, i, q_values, variant, lam, transform)
        te = slice(i * K, (i + 1) * K)
        for q in q_values:
            lda = fits[q]
            Z = project(pls, X_all[te], lda.beta_pls.shape[0]) @ lda.beta_pls
            counts[q] += int(np.sum(nearest_centroid(Z, lda.centroids) == y[te]))
    return counts


def _features(A_w, basis, lam):
    G, L = feature_map(basis, lam)
    return (A_w if G is None else A_w @ G), L


def _lambda_task(args):
    A_w, y, K, n_subj, q_values, variant, lam, basis = args
    X_all, L = _features(A_w, basis, lam)
    return _fold_counts(X_all, y, K, n_subj, q_values, variant, lam, L)


def fold_model(coefs: CoefficientMatrix, basis: BasisSystem | None, lam: float, q_values, held_out: int):
    """PLS and per-q LDA fits of the fold that holds out subject block ``held_out``."""
    variant = "mpls" if basis is None else ("penfpls" if lam > 0 else "fpls")
    X_all, L = _features(within(coefs.A, coefs.K), basis, lam)
    return _fold_fit(X_all, coefs.y, coefs.K, held_out, q_values, variant, lam, L)


def cross_validate(
    coefs: CoefficientMatrix,
    basis: BasisSystem | None,
    grid: CvGrid,
    *,
    n_jobs: int = 1,
) -> CvGrid:
    """Leave-one-subject-out CV over every ``(lambda, q)`` cell.

    Each fold drops all ``K`` rows of one subject. The training rows of a
    fold are centered per subject, so nothing of the held-out subject enters
    the fitted model; the held-out rows are centered on their own mean.
    """
    if not isinstance(grid, CvGrid):
        raise ParameterError("grid must be a CvGrid")
    K, n_subj = coefs.K, coefs.n_subjects
    if n_subj < 3:
        raise ParameterError(f"need at least 3 subjects for cross-validation, got {n_subj}")
    if basis is None and grid.lambdas:
        raise ParameterError("raw multivariate features take no smoothing grid")
    max_q = min(coefs.A.shape[1], (n_subj - 1) * K - 1)
    if grid.q_values[-1] > max_q:
        raise ParameterError(f"q values must not exceed {max_q}, got {grid.q_values[-1]}")
    variant = _variant_for(basis, grid.lambdas)
    A_w = within(coefs.A, K)
    tasks = [(A_w, coefs.y, K, n_subj, grid.q_values, variant, lam, basis) for lam in grid.cell_lambdas]
    if n_jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            per_lam = list(pool.map(_lambda_task, tasks))
    else:
        per_lam = [_lambda_task(t) for t in tasks]
    counts = {}
    for lam, c in zip(grid.cell_lambdas, per_lam):
        for q in grid.q_values:
            counts[lam, q] = c[q]
    total = coefs.N
    results = {key: (v / total, n_subj) for key, v in counts.items()}
    lam_b, q_b = select_best(counts, grid.cell_lambdas, grid.q_values)
    log.debug("cv %s: best lambda=%g q=%d ccr=%.4f", variant, lam_b, q_b, results[lam_b, q_b][0])
    return replace(grid, results=results, best=(lam_b, q_b, results[lam_b, q_b][0]))


def holdout_evaluate(
    train: CoefficientMatrix,
    test: CoefficientMatrix,
    basis: BasisSystem | None,
    lam: float,
    q: int,
    variant: str | None = None,
):
    """Fit on all training subjects and classify the test subjects.

    Returns ``(ccr_test, confusion, model)``.
    """
    if tuple(train.class_labels) != tuple(test.class_labels):
        raise StructuralError(
            f"train conditions {list(train.class_labels)} differ from test {list(test.class_labels)}"
        )
    if variant is None:
        variant = "mpls" if basis is None else ("penfpls" if lam > 0 else "fpls")
    model = fit_classifier(train, basis, variant, lam, q)
    pred = classify_subjects(model, test)
    cm, ccr = confusion_and_ccr(pred, test.y, test.K)
    return ccr, cm, model


def write_selection(path: str | Path, variant: str, best: tuple, ccr_test: float | None) -> None:
    lam, q, ccr_cv = best
    doc = {"variant": variant, "lambda": lam, "q": q, "ccr_cv": ccr_cv, "ccr_test": ccr_test}
    try:
        Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from exc
