"""Dense and sparse two-block simultaneous dimension reduction.

Both data blocks are reduced at once: latent components are extracted from
the X block against the untouched Y block, then from the Y block against
the untouched X block, each side by sequential rank-one deflation. The two
weight matrices are recombined into a single coefficient matrix for
multivariate regression, which stays computable when either block has more
variables than cases.

Sparsity is optional: each weight vector can be soft-thresholded before
its scores are formed, with the thresholds ``eta_x`` and ``eta_y``
controlling how many entries survive in the X and Y weights.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .preprocess import (
    CENTER_KINDS,
    SCALE_KINDS,
    PreprocessParams,
    apply_preprocess,
    fit_preprocess,
)

_DEFLATION_TINY = 1e-12

MODEL_FORMAT_VERSION = 1


class DeflationError(RuntimeError):
    """Deflation degenerated before the requested number of components."""

    def __init__(self, block: str, component: int, reason: str):
        super().__init__(
            f"{block}-block deflation degenerate at component {component}: {reason}"
        )
        self.block = block
        self.component = component


@dataclass(frozen=True)
class ModelHyperparams:
    """Component counts, sparsity levels and preprocessing choices."""

    h_x: int
    h_y: int
    eta_x: float = 0.0
    eta_y: float = 0.0
    center_kind: str = "mean"
    scale_kind: str = "std"

    def __post_init__(self):
        if self.h_x < 1 or self.h_y < 1:
            raise ValueError("component counts must be at least 1")
        for name, eta in (("eta_x", self.eta_x), ("eta_y", self.eta_y)):
            if not 0.0 <= eta < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.center_kind not in CENTER_KINDS:
            raise ValueError(f"unknown center kind {self.center_kind!r}")
        if self.scale_kind not in SCALE_KINDS:
            raise ValueError(f"unknown scale kind {self.scale_kind!r}")


@dataclass(frozen=True)
class TwoblockModel:
    """Fitted two-block model.

    ``W`` and ``V`` hold unit-norm weight vectors per component, ``T`` and
    ``U`` the block scores, ``P`` and ``Q`` the loadings. ``B`` and
    ``intercept`` express the regression of Y on X on the original data
    scale. Models are immutable and safe to share across threads.
    """

    W: np.ndarray
    V: np.ndarray
    T: np.ndarray
    U: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    B: np.ndarray
    intercept: np.ndarray
    x_preprocess: PreprocessParams
    y_preprocess: PreprocessParams
    hyperparams: ModelHyperparams
    x_rotation: np.ndarray
    y_rotation: np.ndarray

    @property
    def n_x_vars(self) -> int:
        return self.B.shape[0]

    @property
    def n_y_vars(self) -> int:
        return self.B.shape[1]

    def predict(self, Xnew) -> np.ndarray:
        """Responses on the original scale, ``Xnew @ B + intercept``."""
        Xnew = np.atleast_2d(np.asarray(Xnew, dtype=float))
        if Xnew.shape[1] != self.n_x_vars:
            raise ValueError(
                f"expected {self.n_x_vars} columns, got {Xnew.shape[1]}"
            )
        return Xnew @ self.B + self.intercept

    def transform(self, Xnew) -> np.ndarray:
        """X-block scores of new data, reproducing training scores on X_train."""
        Z = apply_preprocess(np.atleast_2d(np.asarray(Xnew, dtype=float)),
                             self.x_preprocess)
        return Z @ self.x_rotation


def leading_left_singular_vector(M, tol: float = 1e-12,
                                 max_iter: int = 1000) -> np.ndarray:
    """Dominant left singular vector of a nonzero matrix.

    Power iteration runs on the smaller of the two Gram matrices and is
    transposed back if needed; the deterministic start is the Gram column
    of largest norm. The sign is fixed so the entry of largest magnitude
    is positive. A tie of the top two singular values (within 1e-12
    relative) is reported with a warning, in which case either vector of
    the leading pair may be returned.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    nrm = np.linalg.norm(M)
    if not nrm > 0.0 or not np.isfinite(nrm):
        raise ValueError("matrix is zero, no singular vector exists")
    M = M / nrm
    p, q = M.shape
    left_side = p <= q
    G = M @ M.T if left_side else M.T @ M

    v = _power_iterate(G, tol, max_iter)
    lam = float(v @ G @ v)

    if min(p, q) >= 2:
        G2 = G - lam * np.outer(v, v)
        lam2 = _second_eigenvalue_estimate(G2)
        s1, s2 = np.sqrt(lam), np.sqrt(max(lam2, 0.0))
        if s1 - s2 <= 1e-12 * max(s1, 1e-30):
            warnings.warn(
                "top two singular values are tied; returned vector is one "
                "of the leading pair",
                RuntimeWarning,
            )

    u = v if left_side else M @ v
    u = u / np.linalg.norm(u)
    j = int(np.argmax(np.abs(u)))
    if u[j] < 0.0:
        u = -u
    return u


def _power_iterate(G: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    start = int(np.argmax(np.linalg.norm(G, axis=0)))
    v = G[:, start].copy()
    vn = np.linalg.norm(v)
    if not vn > 0.0:
        raise ValueError("matrix is zero, no singular vector exists")
    v /= vn
    for _ in range(max_iter):
        v_new = G @ v
        nn = np.linalg.norm(v_new)
        if not nn > 0.0:
            raise ValueError("power iteration hit the null space")
        v_new /= nn
        if np.linalg.norm(v_new - v) < tol:
            return v_new
        v = v_new
    warnings.warn("power iteration did not fully converge", RuntimeWarning)
    return v


def _second_eigenvalue_estimate(G2: np.ndarray, iters: int = 200) -> float:
    norms = np.linalg.norm(G2, axis=0)
    j = int(np.argmax(norms))
    if not norms[j] > 1e-30:
        return 0.0
    v = G2[:, j] / norms[j]
    for _ in range(iters):
        v_new = G2 @ v
        nn = np.linalg.norm(v_new)
        if not nn > 1e-30:
            return 0.0
        v = v_new / nn
    return float(v @ G2 @ v)


def soft_threshold(w, eta: float) -> np.ndarray:
    """Soft-threshold a unit weight vector at ``eta`` times its largest entry.

    Entries with magnitude at most ``eta * max|w|`` are zeroed, the rest
    shrink toward zero by that threshold, and the result is renormalized
    to unit norm. The entry of largest magnitude always survives because
    it shrinks by the factor ``1 - eta > 0``. ``eta = 0`` returns the
    input unchanged.
    """
    w = np.asarray(w, dtype=float)
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must lie in [0, 1)")
    if eta == 0.0:
        return w.copy()
    thr = eta * float(np.max(np.abs(w)))
    shrunk = np.sign(w) * np.maximum(np.abs(w) - thr, 0.0)
    return shrunk / np.linalg.norm(shrunk)


def _extract_components(A0: np.ndarray, B0: np.ndarray, h: int, eta: float,
                        block: str):
    """Sequential rank-one deflation of A0 against the fixed block B0.

    Returns weights, scores, loadings and the final residual matrix. The
    cross-product is always taken against the undeflated companion block.
    """
    n = A0.shape[0]
    A = A0.copy()
    W = np.empty((A0.shape[1], h))
    T = np.empty((n, h))
    P = np.empty((A0.shape[1], h))
    for i in range(h):
        if np.linalg.norm(A) < _DEFLATION_TINY:
            raise DeflationError(block, i + 1, "residual norm below 1e-12")
        S = A.T @ B0 / n
        if np.linalg.norm(S) < _DEFLATION_TINY:
            raise DeflationError(block, i + 1, "cross-product norm below 1e-12")
        w = soft_threshold(leading_left_singular_vector(S), eta)
        t = A @ w
        tt = float(t @ t)
        if tt < _DEFLATION_TINY:
            raise DeflationError(block, i + 1, "score vector vanished")
        p_vec = A.T @ t / tt
        A -= np.outer(t, p_vec)
        W[:, i], T[:, i], P[:, i] = w, t, p_vec
    return W, T, P, A


def _rotation(W: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Rotation R with scores = preprocessed data @ R, exact by construction."""
    R = np.zeros_like(W)
    for i in range(W.shape[1]):
        R[:, i] = W[:, i] - R[:, :i] @ (P[:, :i].T @ W[:, i])
    return R


def coefficients_from_weights(W, V, X0, Y0) -> np.ndarray:
    """Coefficients on the preprocessed scale from fitted weight matrices.

    Computed as ``W (W' Sxx W)^-1 (W' Sxy V) V'`` with the cross-products
    ``Sxx = X0'X0/n`` and ``Sxy = X0'Y0/n``. Reproduces the least-squares
    coefficients when W and V are square orthonormal.
    """
    X0 = np.asarray(X0, dtype=float)
    Y0 = np.asarray(Y0, dtype=float)
    n = X0.shape[0]
    S_xx = X0.T @ X0 / n
    S_xy = X0.T @ Y0 / n
    M = W.T @ S_xx @ W
    if not np.all(np.isfinite(M)) or np.linalg.cond(M) > 1e12:
        raise np.linalg.LinAlgError(
            "weight-projected covariance is singular; h_x is likely too large"
        )
    core = np.linalg.solve(M, W.T @ S_xy @ V)
    return W @ core @ V.T


def fit_twoblock(X, Y, hp: ModelHyperparams) -> TwoblockModel:
    """Fit the two-block model.

    After centring and scaling, ``h_x`` components are deflated out of the
    X block against the untouched preprocessed Y block, then ``h_y``
    components out of the Y block against the untouched preprocessed X
    block. Weight vectors are thresholded when the corresponding ``eta``
    is positive. Coefficients and intercept are returned on the original
    data scale.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must have the same number of rows")
    n, p = X.shape
    q = Y.shape[1]
    if n < 2:
        raise ValueError("need at least two rows")
    if hp.h_x > min(n - 1, p):
        raise ValueError(f"h_x={hp.h_x} exceeds min(n - 1, p) = {min(n - 1, p)}")
    if hp.h_y > min(n - 1, q):
        raise ValueError(f"h_y={hp.h_y} exceeds min(n - 1, q) = {min(n - 1, q)}")

    x_pre = fit_preprocess(X, hp.center_kind, hp.scale_kind)
    y_pre = fit_preprocess(Y, hp.center_kind, hp.scale_kind)
    X0 = apply_preprocess(X, x_pre)
    Y0 = apply_preprocess(Y, y_pre)

    W, T, P, _ = _extract_components(X0, Y0, hp.h_x, hp.eta_x, "X")
    V, U, Q, _ = _extract_components(Y0, X0, hp.h_y, hp.eta_y, "Y")

    B_scaled = coefficients_from_weights(W, V, X0, Y0)
    B = B_scaled * (y_pre.scales[None, :] / x_pre.scales[:, None])
    intercept = y_pre.centers - x_pre.centers @ B

    return TwoblockModel(
        W=W, V=V, T=T, U=U, P=P, Q=Q, B=B, intercept=intercept,
        x_preprocess=x_pre, y_preprocess=y_pre, hyperparams=hp,
        x_rotation=_rotation(W, P), y_rotation=_rotation(V, Q),
    )


def _array_to_json(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "values": arr.tolist()}


def _array_from_json(obj) -> np.ndarray:
    arr = np.asarray(obj["values"], dtype=float).reshape(obj["shape"])
    return arr


def _preprocess_to_json(params: PreprocessParams) -> dict:
    return {
        "center_kind": params.center_kind,
        "scale_kind": params.scale_kind,
        "centers": params.centers.tolist(),
        "scales": params.scales.tolist(),
    }


def _preprocess_from_json(obj) -> PreprocessParams:
    return PreprocessParams(
        obj["center_kind"], obj["scale_kind"],
        np.asarray(obj["centers"], dtype=float),
        np.asarray(obj["scales"], dtype=float),
    )


def model_to_dict(model: TwoblockModel) -> dict:
    """JSON-serializable document with every model field and explicit shapes."""
    hp = model.hyperparams
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "twoblock",
        "hyperparams": {
            "h_x": hp.h_x, "h_y": hp.h_y,
            "eta_x": hp.eta_x, "eta_y": hp.eta_y,
            "center_kind": hp.center_kind, "scale_kind": hp.scale_kind,
        },
        "x_preprocess": _preprocess_to_json(model.x_preprocess),
        "y_preprocess": _preprocess_to_json(model.y_preprocess),
        "W": _array_to_json(model.W),
        "V": _array_to_json(model.V),
        "T": _array_to_json(model.T),
        "U": _array_to_json(model.U),
        "P": _array_to_json(model.P),
        "Q": _array_to_json(model.Q),
        "B": _array_to_json(model.B),
        "intercept": model.intercept.tolist(),
        "x_rotation": _array_to_json(model.x_rotation),
        "y_rotation": _array_to_json(model.y_rotation),
    }


def model_from_dict(doc: dict) -> TwoblockModel:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported format version {doc.get('format_version')!r}")
    if doc.get("kind") != "twoblock":
        raise ValueError(f"not a twoblock model document ({doc.get('kind')!r})")
    hp = ModelHyperparams(**doc["hyperparams"])
    return TwoblockModel(
        W=_array_from_json(doc["W"]), V=_array_from_json(doc["V"]),
        T=_array_from_json(doc["T"]), U=_array_from_json(doc["U"]),
        P=_array_from_json(doc["P"]), Q=_array_from_json(doc["Q"]),
        B=_array_from_json(doc["B"]),
        intercept=np.asarray(doc["intercept"], dtype=float),
        x_preprocess=_preprocess_from_json(doc["x_preprocess"]),
        y_preprocess=_preprocess_from_json(doc["y_preprocess"]),
        hyperparams=hp,
        x_rotation=_array_from_json(doc["x_rotation"]),
        y_rotation=_array_from_json(doc["y_rotation"]),
    )


def save_model(model: TwoblockModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> TwoblockModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
