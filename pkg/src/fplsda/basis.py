"""B-spline bases, curve containers and regression-spline coefficient fits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline

from .errors import (
    DataError,
    FitError,
    NumericalError,
    ParameterError,
    RangeError,
    StructuralError,
)

CSV_HEADER = ("subject", "condition", "t", "value")

# relative tolerance for the column-pivoted QR rank test
RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class BasisSystem:
    """Clamped B-spline basis on equidistant knots.

    Attributes
    ----------
    degree : int
        Polynomial degree of the pieces (3 gives cubic splines).
    interior_knots : int
        Number of equidistant knots strictly inside the domain.
    domain : tuple of float
        ``(t_min, t_max)``.
    penalty_order : int
        Order ``d`` of the coefficient difference penalty.
    knots : ndarray
        Full knot vector, boundary knots repeated ``degree + 1`` times.
    gram : ndarray of shape (p, p)
        Inner products of the basis functions on the domain.
    penalty : ndarray of shape (p, p)
        ``D'D`` with ``D`` the ``d``-th order difference operator.
    """

    degree: int
    interior_knots: int
    domain: tuple[float, float]
    penalty_order: int
    knots: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)
    penalty: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return len(self.knots) - self.degree - 1

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "interior_knots": self.interior_knots,
            "domain": list(self.domain),
            "penalty_order": self.penalty_order,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSystem":
        return build_basis(d["degree"], d["interior_knots"], tuple(d["domain"]), d["penalty_order"])


def difference_penalty(p: int, order: int) -> np.ndarray:
    """Return ``(D^d)' D^d`` for the ``order``-th difference matrix of size ``(p - d) x p``."""
    if order < 1 or order >= p:
        raise ParameterError(f"penalty order must be in [1, {p - 1}], got {order}")
    D = np.diff(np.eye(p), n=order, axis=0)
    return D.T @ D


def _gram_matrix(knots: np.ndarray, degree: int) -> np.ndarray:
    # products of two degree-g pieces have degree 2g; n nodes integrate degree 2n-1 exactly
    n_nodes = math.ceil((2 * degree + 1) / 2) + 1
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    breaks = np.unique(knots)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    x = (0.5 * (a + b))[:, None] + half[:, None] * nodes[None, :]
    w = (half[:, None] * weights[None, :]).ravel()
    B = BSpline.design_matrix(x.ravel(), knots, degree).toarray()
    G = (B * w[:, None]).T @ B
    return 0.5 * (G + G.T)


def build_basis(
    degree: int = 3,
    interior_knots: int = 15,
    domain: tuple[float, float] = (0.0, 1.0),
    penalty_order: int = 2,
) -> BasisSystem:
    """Build a clamped B-spline basis with equidistant interior knots.

    The basis dimension is ``p = interior_knots + degree + 1``. The Gram
    matrix is integrated exactly by Gauss-Legendre quadrature on every knot
    span.
    """
    if int(degree) != degree or degree < 1:
        raise ParameterError(f"degree must be a positive integer, got {degree}")
    if int(interior_knots) != interior_knots or interior_knots < 0:
        raise ParameterError(f"interior_knots must be a nonnegative integer, got {interior_knots}")
    t_min, t_max = (float(v) for v in domain)
    if not (np.isfinite(t_min) and np.isfinite(t_max)) or t_min >= t_max:
        raise ParameterError(f"degenerate domain [{t_min}, {t_max}]")
    degree, interior_knots, penalty_order = int(degree), int(interior_knots), int(penalty_order)
    inner = np.linspace(t_min, t_max, interior_knots + 2)
    knots = np.concatenate([np.full(degree, t_min), inner, np.full(degree, t_max)])
    p = len(knots) - degree - 1
    penalty = difference_penalty(p, penalty_order)
    gram = _gram_matrix(knots, degree)
    return BasisSystem(degree, interior_knots, (t_min, t_max), penalty_order, knots, gram, penalty)


def design_matrix(basis: BasisSystem, grid: Sequence[float] | np.ndarray) -> np.ndarray:
    """Dense ``len(grid) x p`` matrix of basis function values."""
    t = np.atleast_1d(np.asarray(grid, dtype=float))
    if t.ndim != 1:
        raise ParameterError("grid must be one-dimensional")
    t_min, t_max = basis.domain
    bad = (t < t_min) | (t > t_max) | ~np.isfinite(t)
    if bad.any():
        raise RangeError(f"{int(bad.sum())} point(s) outside [{t_min}, {t_max}], e.g. {t[bad][0]!r}")
    return BSpline.design_matrix(t, basis.knots, basis.degree).toarray()


def evaluate(basis: BasisSystem, coefs: np.ndarray, grid) -> np.ndarray:
    """Evaluate spline(s) with coefficient columns ``coefs`` on ``grid``."""
    return design_matrix(basis, grid) @ np.asarray(coefs, dtype=float)


def factor_metric(basis: BasisSystem, lam: float = 0.0) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L L' = gram + lam * penalty``."""
    lam = float(lam)
    if not lam >= 0.0:
        raise ParameterError(f"lambda must be nonnegative, got {lam}")
    M = basis.gram + lam * basis.penalty if lam > 0 else basis.gram
    try:
        return linalg.cholesky(M, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"metric is not positive definite at lambda={lam}: {exc}") from exc


# ---------------------------------------------------------------------------
# Curve data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CurveDataset:
    """Repeated-measures curves keyed by ``(subject, condition)``.

    ``conditions`` fixes the label order: condition ``conditions[k]`` gets
    label ``k + 1``. Every subject must have exactly one curve per condition.
    """

    subjects: tuple[str, ...]
    conditions: tuple[str, ...]
    curves: dict = field(repr=False)

    def __post_init__(self):
        if len(self.conditions) < 2:
            raise StructuralError("at least two conditions are required")
        if len(set(self.subjects)) != len(self.subjects):
            raise StructuralError("duplicate subject identifiers")
        known = set(self.conditions)
        for s, c in self.curves:
            if c not in known:
                raise StructuralError(f"unknown condition {c!r} for subject {s!r}")
        for s in self.subjects:
            missing = [c for c in self.conditions if (s, c) not in self.curves]
            if missing:
                raise StructuralError(f"subject {s!r} is missing condition(s) {missing}")
        extra = {s for s, _ in self.curves} - set(self.subjects)
        if extra:
            raise StructuralError(f"curves for undeclared subjects {sorted(extra)}")
        for key, (t, x) in self.curves.items():
            if len(t) != len(x) or len(t) == 0:
                raise DataError(f"curve {key} has mismatched or empty arrays")

    @property
    def K(self) -> int:
        return len(self.conditions)

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def grid_shared(self) -> bool:
        grids = [t for t, _ in self.curves.values()]
        first = grids[0]
        return all(len(g) == len(first) and np.array_equal(g, first) for g in grids[1:])

    def keys(self) -> list[tuple[str, str]]:
        """Curve keys, subject-major then condition order."""
        return [(s, c) for s in self.subjects for c in self.conditions]

    def labels(self) -> np.ndarray:
        return np.tile(np.arange(1, self.K + 1), self.n_subjects)

    def row_subjects(self) -> np.ndarray:
        return np.repeat(np.asarray(self.subjects, dtype=object), self.K)

    def subset(self, subjects: Iterable[str]) -> "CurveDataset":
        subjects = tuple(subjects)
        curves = {(s, c): self.curves[s, c] for s in subjects for c in self.conditions}
        return CurveDataset(subjects, self.conditions, curves)

    @classmethod
    def from_records(cls, records: Iterable[tuple], conditions: Sequence[str] | None = None) -> "CurveDataset":
        """Build from ``(subject, condition, t, value)`` tuples.

        Subjects and conditions are ordered by first appearance unless
        ``conditions`` is given.
        """
        subjects: dict[str, None] = {}
        seen_conditions: dict[str, None] = {}
        points: dict[tuple[str, str], list] = {}
        for s, c, t, v in records:
            s, c = str(s), str(c)
            subjects.setdefault(s)
            seen_conditions.setdefault(c)
            points.setdefault((s, c), []).append((float(t), float(v)))
        if conditions is None:
            conditions = tuple(seen_conditions)
        else:
            conditions = tuple(conditions)
            unknown = set(seen_conditions) - set(conditions)
            if unknown:
                raise StructuralError(f"unknown condition label(s) {sorted(unknown)}")
        curves = {}
        for key, pts in points.items():
            arr = np.array(pts, dtype=float)
            order = np.argsort(arr[:, 0], kind="stable")
            curves[key] = (arr[order, 0], arr[order, 1])
        return cls(tuple(subjects), conditions, curves)


def read_curve_csv(path: str | Path, conditions: Sequence[str] | None = None) -> CurveDataset:
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                records.append((row[0], row[1], float(row[2]), float(row[3])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not records:
        raise DataError(f"{path}: no data rows")
    return CurveDataset.from_records(records, conditions)


def write_curve_csv(data: CurveDataset, path: str | Path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for s, c in data.keys():
                t, x = data.curves[s, c]
                for ti, xi in zip(t, x):
                    w.writerow((s, c, repr(float(ti)), repr(float(xi))))
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from exc


# ---------------------------------------------------------------------------
# Coefficient matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    """Rows of basis coefficients (or raw samples), one per curve.

    Rows are ordered subject-major, then condition; ``y`` holds labels
    ``1..K``.
    """

    A: np.ndarray
    y: np.ndarray
    subjects: np.ndarray
    class_labels: tuple[str, ...]

    @property
    def K(self) -> int:
        return len(self.class_labels)

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def n_subjects(self) -> int:
        return self.N // self.K

    @property
    def Ytilde(self) -> np.ndarray:
        return dummy_matrix(self.y, self.K)

    def take_subjects(self, idx) -> "CoefficientMatrix":
        """Restrict to the subjects at block positions ``idx``."""
        idx = np.asarray(idx, dtype=int)
        rows = (idx[:, None] * self.K + np.arange(self.K)[None, :]).ravel()
        return CoefficientMatrix(self.A[rows], self.y[rows], self.subjects[rows], self.class_labels)


def dummy_matrix(y: np.ndarray, K: int) -> np.ndarray:
    """Reference coding: ``N x (K-1)`` indicators, label ``K`` is all zeros."""
    y = np.asarray(y)
    return (y[:, None] == np.arange(1, K)[None, :]).astype(float)


def _lstsq_qr(B: np.ndarray, X: np.ndarray, name) -> np.ndarray:
    Q, R, piv = linalg.qr(B, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOL * diag[0])) if diag.size else 0
    if rank < B.shape[1]:
        raise FitError(f"curve {name}: design is rank deficient (rank {rank} < p={B.shape[1]})")
    sol = linalg.solve_triangular(R, Q.T @ X)
    out = np.empty_like(sol)
    out[piv] = sol
    return out


def fit_regression_splines(basis: BasisSystem, data: CurveDataset) -> CoefficientMatrix:
    """Least-squares basis coefficients for every curve in ``data``.

    Curves sharing an observation grid are solved together with one
    column-pivoted QR factorization.
    """
    keys = data.keys()
    p = basis.p
    A = np.empty((len(keys), p))
    groups: dict[bytes, list[int]] = {}
    for r, key in enumerate(keys):
        t, _ = data.curves[key]
        if len(np.unique(t)) < p:
            raise FitError(f"curve {key}: {len(np.unique(t))} distinct points, need at least p={p}")
        groups.setdefault(np.asarray(t, dtype=float).tobytes(), []).append(r)
    for rows in groups.values():
        t = data.curves[keys[rows[0]]][0]
        try:
            B = design_matrix(basis, t)
        except RangeError as exc:
            raise FitError(f"curve {keys[rows[0]]}: {exc}") from exc
        X = np.column_stack([data.curves[keys[r]][1] for r in rows])
        name = keys[rows[0]] if len(rows) == 1 else f"group starting at {keys[rows[0]]}"
        A[rows] = _lstsq_qr(B, X, name).T
    return CoefficientMatrix(A, data.labels(), data.row_subjects(), data.conditions)


def sample_matrix(data: CurveDataset) -> tuple[CoefficientMatrix, np.ndarray]:
    """Raw discretized values as features; requires a shared grid.

    Returns the feature matrix and the common grid.
    """
    if not data.grid_shared:
        raise DataError("raw-sample features need every curve observed on the same grid")
    keys = data.keys()
    grid = data.curves[keys[0]][0]
    A = np.vstack([data.curves[k][1] for k in keys])
    return CoefficientMatrix(A, data.labels(), data.row_subjects(), data.conditions), grid
