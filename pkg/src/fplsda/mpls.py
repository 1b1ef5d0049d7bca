"""Multi-response PLS regression on (optionally metric-transformed) features.

Functional PLS on basis coefficients ``A`` reduces to ordinary PLS on a
transformed matrix ``A @ G``:

* non-penalized: ``G = L`` with ``L L' = gram``;
* penalized: ``G = gram @ inv(L)'`` with ``L L' = gram + lam * penalty``.

At ``lam = 0`` both coincide because ``gram @ inv(L)' = L``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .basis import BasisSystem, factor_metric
from .errors import DegenerateDataError, ParameterError

VARIANTS = ("mpls", "fpls", "penfpls")

# early-stop threshold on the Frobenius norm of the residual cross-covariance
STOP_TOL = 1e-12


def feature_map(basis: BasisSystem | None, lam: float = 0.0) -> tuple[np.ndarray, np.ndarray | None]:
    """Return ``(G, L)`` such that PLS features are ``A @ G``.

    ``basis=None`` means raw multivariate features: ``G`` is the identity and
    no factor is returned.
    """
    if basis is None:
        return None, None
    L = factor_metric(basis, lam)
    if lam == 0:
        return L, L
    # (L^{-1} gram)' = gram L^{-T}; triangular solve, no explicit inverse
    G = linalg.solve_triangular(L, basis.gram, lower=True).T
    return G, L


def transform_features(A: np.ndarray, basis: BasisSystem | None, lam: float = 0.0) -> np.ndarray:
    G, _ = feature_map(basis, lam)
    A = np.asarray(A, dtype=float)
    return A.copy() if G is None else A @ G


def _sign_fix(v: np.ndarray) -> np.ndarray:
    """Flip columns so that each one's largest-magnitude entry is positive."""
    v = np.atleast_2d(v.T).T
    idx = np.argmax(np.abs(v), axis=0)
    s = np.sign(v[idx, np.arange(v.shape[1])])
    s[s == 0] = 1.0
    return v * s


@dataclass(frozen=True, eq=False)
class PlsModel:
    """Fitted multi-response PLS.

    ``W`` holds unit-norm weights, ``T`` the training scores, ``P_load`` and
    ``C_load`` the X- and Y-loadings of each component. ``transform`` is the
    Cholesky factor of the metric used to build the features (``None`` for
    raw multivariate features).
    """

    W: np.ndarray
    T: np.ndarray
    P_load: np.ndarray
    C_load: np.ndarray
    x_col_means: np.ndarray
    y_col_means: np.ndarray
    q_max: int
    variant: str = "mpls"
    lam: float = 0.0
    transform: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_components(self) -> int:
        return self.W.shape[1]

    def rotation(self, q: int | None = None) -> np.ndarray:
        """Projection matrix ``W (P'W)^{-1}`` for the first ``q`` components."""
        q = self.n_components if q is None else q
        W, P = self.W[:, :q], self.P_load[:, :q]
        return W @ np.linalg.inv(P.T @ W)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "lambda": self.lam,
            "q_max": self.q_max,
            "W": self.W.tolist(),
            "T": self.T.tolist(),
            "P_load": self.P_load.tolist(),
            "C_load": self.C_load.tolist(),
            "x_col_means": self.x_col_means.tolist(),
            "y_col_means": self.y_col_means.tolist(),
            "transform": None if self.transform is None else self.transform.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlsModel":
        def arr(key, ndim=2):
            a = np.array(d[key], dtype=float)
            return a.reshape(a.shape[0], -1) if ndim == 2 and a.ndim == 1 else a

        return cls(
            W=arr("W"),
            T=arr("T"),
            P_load=arr("P_load"),
            C_load=arr("C_load"),
            x_col_means=np.array(d["x_col_means"], dtype=float),
            y_col_means=np.array(d["y_col_means"], dtype=float),
            q_max=int(d["q_max"]),
            variant=d["variant"],
            lam=float(d["lambda"]),
            transform=None if d["transform"] is None else np.array(d["transform"], dtype=float),
        )


def fit_pls(
    X: np.ndarray,
    Ytilde: np.ndarray,
    q_max: int,
    *,
    variant: str = "mpls",
    lam: float = 0.0,
    transform: np.ndarray | None = None,
) -> PlsModel:
    """Extract up to ``q_max`` PLS components by two-block deflation.

    Each weight is the dominant left singular vector of the current
    cross-product ``X_h' Y_h``. Extraction stops early once that
    cross-product vanishes; the attained count is ``n_components``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Ytilde, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ParameterError(f"X {X.shape} and Ytilde {Y.shape} row counts differ")
    N, p = X.shape
    if int(q_max) != q_max or not 1 <= q_max <= min(p, N - 1):
        raise ParameterError(f"q_max must be in [1, {min(p, N - 1)}], got {q_max}")
    q_max = int(q_max)

    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xh = X - x_mean
    Yh = Y - y_mean
    W = np.zeros((p, q_max))
    T = np.zeros((N, q_max))
    P = np.zeros((p, q_max))
    C = np.zeros((Y.shape[1], q_max))
    h = 0
    for h in range(q_max):
        M = Xh.T @ Yh
        if np.linalg.norm(M) < STOP_TOL:
            if h == 0:
                raise DegenerateDataError("features and responses have zero cross-covariance")
            break
        U, _, _ = np.linalg.svd(M, full_matrices=False)
        w = _sign_fix(U[:, :1])[:, 0]
        t = Xh @ w
        tt = t @ t
        p_h = Xh.T @ t / tt
        c_h = Yh.T @ t / tt
        Xh = Xh - np.outer(t, p_h)
        Yh = Yh - np.outer(t, c_h)
        W[:, h], T[:, h], P[:, h], C[:, h] = w, t, p_h, c_h
    else:
        h = q_max
    return PlsModel(
        W=W[:, :h],
        T=T[:, :h],
        P_load=P[:, :h],
        C_load=C[:, :h],
        x_col_means=x_mean,
        y_col_means=y_mean,
        q_max=q_max,
        variant=variant,
        lam=float(lam),
        transform=transform,
    )


def project(model: PlsModel, X_new: np.ndarray, q: int) -> np.ndarray:
    """Scores of new feature rows on the first ``q`` components."""
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    if int(q) != q or not 1 <= q <= model.n_components:
        raise ParameterError(f"q must be in [1, {model.n_components}], got {q}")
    if X_new.shape[1] != model.W.shape[0]:
        raise ParameterError(f"expected {model.W.shape[0]} feature columns, got {X_new.shape[1]}")
    return (X_new - model.x_col_means) @ model.rotation(int(q))
