"""Fisher LDA on PLS scores and functional discriminant recovery.

The full classifier runs: within-subject centering of the coefficient rows,
the feature transform of the chosen variant, PLS scores, Fisher directions,
then nearest class centroid in discriminant space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from . import __version__
from .basis import BasisSystem, CoefficientMatrix, dummy_matrix, evaluate
from .errors import DataError, NumericalError, ParameterError, StructuralError
from .mpls import VARIANTS, PlsModel, _sign_fix, feature_map, fit_pls, project
from .variation import within

MODEL_FORMAT = "fplsda-model"
MODEL_VERSION = 1

COND_LIMIT = 1e12
RIDGE = 1e-10


@dataclass(frozen=True)
class LdaFit:
    beta_pls: np.ndarray
    alpha: np.ndarray
    centroids: np.ndarray
    eigenvalues: np.ndarray


def scatter_matrices(T: np.ndarray, y: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Within- and between-class scatter of the rows of ``T``."""
    mean = T.mean(axis=0)
    q = T.shape[1]
    S_w = np.zeros((q, q))
    S_b = np.zeros((q, q))
    for k in range(1, K + 1):
        Tk = T[y == k]
        mk = Tk.mean(axis=0)
        D = Tk - mk
        S_w += D.T @ D
        S_b += len(Tk) * np.outer(mk - mean, mk - mean)
    return S_w, S_b


def class_means(T: np.ndarray, y: np.ndarray, K: int) -> np.ndarray:
    return np.vstack([T[y == k].mean(axis=0) for k in range(1, K + 1)])


def fit_lda(T: np.ndarray, y: np.ndarray, K: int | None = None) -> LdaFit:
    """Fisher discriminant directions for scores ``T`` and labels ``1..K``.

    Solves ``S_b v = mu S_w v`` and keeps the leading ``min(K-1, q)``
    eigenvectors, normalized to unit ``S_w``-norm. A small ridge is added to
    ``S_w`` when it is badly conditioned.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    y = np.asarray(y)
    K = int(y.max()) if K is None else K
    if K < 2:
        raise ParameterError("need at least two classes")
    q = T.shape[1]
    if q < 1:
        raise ParameterError("need at least one score column")
    counts = np.bincount(y, minlength=K + 1)[1:]
    if len(counts) != K or (counts < 2).any():
        raise ParameterError(f"every class needs at least two rows, got counts {counts.tolist()}")
    S_w, S_b = scatter_matrices(T, y, K)
    if np.linalg.cond(S_w) > COND_LIMIT:
        # a vanishing S_w (noise-free classes) falls back to the total scatter scale
        scale = max(np.trace(S_w), RIDGE * np.trace(S_w + S_b))
        S_w = S_w + RIDGE * scale / q * np.eye(q)
    try:
        evals, evecs = linalg.eigh(S_b, S_w)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"within-class scatter is singular: {exc}") from exc
    r = min(K - 1, q)
    order = np.argsort(evals)[::-1][:r]
    beta = _sign_fix(evecs[:, order])
    means = class_means(T, y, K)
    centroids = means @ beta
    alpha = -(T.mean(axis=0) @ beta)
    return LdaFit(beta, alpha, centroids, evals[order])


def nearest_centroid(Z: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Labels ``1..K`` of the closest centroid; exact ties go to the lowest label."""
    d2 = ((Z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    best = d2.min(axis=1, keepdims=True)
    tied = d2 <= best * (1 + 1e-12)
    return np.argmax(tied, axis=1) + 1


def recover_beta(beta_pls: np.ndarray, pls: PlsModel, q: int | None = None) -> np.ndarray:
    """Basis coefficients of the discriminant functions.

    Uses ``inv(L)' R beta_pls`` where ``R`` is the PLS rotation, so that
    ``A gram beta = T beta_pls`` for the training coefficient rows.
    """
    beta_pls = np.asarray(beta_pls, dtype=float)
    q = beta_pls.shape[0] if q is None else q
    if beta_pls.shape[0] != q:
        raise ParameterError(f"beta_pls has {beta_pls.shape[0]} rows, expected {q}")
    v = pls.rotation(q) @ beta_pls
    if pls.transform is None:
        return v
    return linalg.solve_triangular(pls.transform, v, lower=True, trans="T")


@dataclass(frozen=True, eq=False)
class DiscriminantModel:
    """A fitted FLDA-on-PLS classifier."""

    pls: PlsModel
    q: int
    beta_pls: np.ndarray
    alpha: np.ndarray
    beta_basis: np.ndarray
    centroids: np.ndarray
    class_labels: tuple[str, ...]
    basis: BasisSystem | None = None
    grid: np.ndarray | None = field(default=None, repr=False)
    feature_matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def variant(self) -> str:
        return self.pls.variant

    @property
    def lam(self) -> float:
        return self.pls.lam

    @property
    def K(self) -> int:
        return len(self.class_labels)

    def features(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[1] != self.pls.W.shape[0]:
            raise ParameterError(f"expected {self.pls.W.shape[0]} columns, got {rows.shape[1]}")
        return rows if self.feature_matrix is None else rows @ self.feature_matrix

    def discriminant_scores(self, rows: np.ndarray) -> np.ndarray:
        return project(self.pls, self.features(rows), self.q) @ self.beta_pls

    def discriminant_functions(self, grid) -> np.ndarray:
        if self.basis is None:
            raise ParameterError("discriminant functions need a functional (basis) variant")
        return evaluate(self.basis, self.beta_basis, grid)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "package_version": __version__,
            "variant": self.variant,
            "lambda": self.lam,
            "q": self.q,
            "class_labels": list(self.class_labels),
            "basis": None if self.basis is None else self.basis.to_dict(),
            "grid": None if self.grid is None else self.grid.tolist(),
            "pls": self.pls.to_dict(),
            "beta_pls": self.beta_pls.tolist(),
            "alpha": self.alpha.tolist(),
            "beta_basis": self.beta_basis.tolist(),
            "centroids": self.centroids.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscriminantModel":
        if d.get("format") != MODEL_FORMAT:
            raise DataError("not a model document")
        if d.get("version") != MODEL_VERSION:
            raise DataError(f"unsupported model version {d.get('version')}")
        pls = PlsModel.from_dict(d["pls"])
        basis = None if d["basis"] is None else BasisSystem.from_dict(d["basis"])
        G, _ = feature_map(basis, pls.lam)
        return cls(
            pls=pls,
            q=int(d["q"]),
            beta_pls=np.array(d["beta_pls"], dtype=float),
            alpha=np.array(d["alpha"], dtype=float),
            beta_basis=np.array(d["beta_basis"], dtype=float),
            centroids=np.array(d["centroids"], dtype=float),
            class_labels=tuple(d["class_labels"]),
            basis=basis,
            grid=None if d["grid"] is None else np.array(d["grid"], dtype=float),
            feature_matrix=G,
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        try:
            path.write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot write {path}: {exc.strerror}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "DiscriminantModel":
        path = Path(path)
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(d)


def method_variant(variant: str, lam: float) -> str:
    if variant not in VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    if variant != "penfpls" and lam != 0:
        raise ParameterError(f"variant {variant} takes no smoothing parameter")
    return variant


def fit_features(
    X_w: np.ndarray,
    y: np.ndarray,
    K: int,
    q_values,
    *,
    variant: str,
    lam: float,
    transform: np.ndarray | None,
) -> tuple[PlsModel, dict[int, LdaFit]]:
    """One PLS fit up to ``max(q_values)`` and an LDA fit for every ``q``.

    ``q`` values beyond the attained number of components are clipped.
    """
    q_values = sorted({int(q) for q in q_values})
    N, p = X_w.shape
    q_top = min(max(q_values), p, N - 1)
    pls = fit_pls(X_w, dummy_matrix(y, K), q_top, variant=variant, lam=lam, transform=transform)
    fits: dict[int, LdaFit] = {}
    for q in q_values:
        qe = min(q, pls.n_components)
        if qe not in fits:
            fits[qe] = fit_lda(project(pls, X_w, qe), y, K)
        fits[q] = fits[qe]
    return pls, fits


def effective_q(pls: PlsModel, q: int) -> int:
    return min(int(q), pls.n_components)


def fit_classifier(
    coefs: CoefficientMatrix,
    basis: BasisSystem | None,
    variant: str = "penfpls",
    lam: float = 0.0,
    q: int = 2,
    grid: np.ndarray | None = None,
) -> DiscriminantModel:
    """Fit the full classifier on complete repeated-measures rows.

    ``basis`` must be ``None`` for the multivariate ``mpls`` variant, whose
    rows are raw samples on ``grid``.
    """
    method_variant(variant, lam)
    if (variant == "mpls") != (basis is None):
        raise ParameterError("mpls works on raw samples (basis=None); fpls/penfpls need a basis")
    if int(q) != q or q < 1:
        raise ParameterError(f"q must be a positive integer, got {q}")
    A_w = within(coefs.A, coefs.K)
    G, L = feature_map(basis, lam)
    X_w = A_w if G is None else A_w @ G
    pls, fits = fit_features(X_w, coefs.y, coefs.K, [q], variant=variant, lam=lam, transform=L)
    qe = effective_q(pls, q)
    lda = fits[q]
    return DiscriminantModel(
        pls=pls,
        q=qe,
        beta_pls=lda.beta_pls,
        alpha=lda.alpha,
        beta_basis=recover_beta(lda.beta_pls, pls, qe),
        centroids=lda.centroids,
        class_labels=coefs.class_labels,
        basis=basis,
        grid=None if grid is None else np.asarray(grid, dtype=float),
        feature_matrix=G,
    )


def classify(model: DiscriminantModel, rows: np.ndarray) -> np.ndarray:
    """Labels ``1..K`` for within-subject-centered coefficient rows."""
    return nearest_centroid(model.discriminant_scores(rows), model.centroids)


def classify_subjects(model: DiscriminantModel, coefs: CoefficientMatrix) -> np.ndarray:
    """Center each subject's block on its own mean, then classify every row."""
    if tuple(coefs.class_labels) != tuple(model.class_labels):
        raise StructuralError(
            f"condition labels {list(coefs.class_labels)} differ from the model's {list(model.class_labels)}"
        )
    return classify(model, within(coefs.A, coefs.K))


def confusion_and_ccr(predicted, actual, K: int | None = None) -> tuple[np.ndarray, float]:
    """Confusion matrix (rows actual, columns predicted) and correct rate."""
    predicted = np.asarray(predicted, dtype=int)
    actual = np.asarray(actual, dtype=int)
    if predicted.shape != actual.shape:
        raise ParameterError("predicted and actual lengths differ")
    if predicted.size == 0:
        raise ParameterError("no predictions")
    K = int(max(predicted.max(), actual.max())) if K is None else K
    cm = np.zeros((K, K), dtype=int)
    np.add.at(cm, (actual - 1, predicted - 1), 1)
    return cm, float(np.trace(cm) / cm.sum())
