"""Outlier-robust two-block estimation by iterative case reweighting.

The classical two-block fit is wrapped in a reweighting loop. Both blocks
are first robustly centred and scaled, and each case gets a starting
weight from its full-block distance. Every iteration recenters the
preprocessed data by the current weighted mean, multiplies each row by
the square root of its weight, fits a two-block model to the weighted
data (no further centring or scaling), unweights the extracted scores by
dividing the rows by sqrt(w), and recomputes per-block weights from
robust distances in the two score spaces. Centring before row-weighting
matters: it makes the unweighted scores exactly the case-level scores, so
a case at the weight floor is judged by where it actually sits and can
recover full weight later. Iteration stops when the squared norm of the
coefficient matrix stabilizes.

Weights are kept per block, so leverage points are caught through the X
weights, vertical outliers through the Y weights, and joint contamination
through their product. Every weight is floored at a tiny positive value
so the score unweighting never divides by zero.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    MODEL_FORMAT_VERSION,
    ModelHyperparams,
    TwoblockModel,
    fit_twoblock,
    model_from_dict,
    model_to_dict,
)
from .preprocess import PreprocessParams, apply_preprocess, fit_preprocess
from .weighting import (
    AGGRESSIVE_PROBS,
    WEIGHT_FLOOR,
    WeightFunctionSpec,
    distance_weights,
    score_distances,
    starting_weights,
)


class DegenerateWeightsError(RuntimeError):
    """Every case in one block was floored; the fit carries no information."""

    def __init__(self, block: str):
        super().__init__(f"all case weights in the {block} block hit the floor")
        self.block = block


@dataclass(frozen=True)
class RtbConfig:
    """Hyperparameters, weighting function and loop controls for a robust fit."""

    hyperparams: ModelHyperparams
    weight_spec: WeightFunctionSpec = WeightFunctionSpec()
    conv_tol: float = 1e-4
    max_iter: int = 100
    weight_floor: float = WEIGHT_FLOOR

    def __post_init__(self):
        if not self.conv_tol > 0.0:
            raise ValueError("conv_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0.0 < self.weight_floor < 1.0:
            raise ValueError("weight_floor must lie in (0, 1)")


def default_rtb_config(h_x: int, h_y: int, eta_x: float = 0.0, eta_y: float = 0.0,
                       probs=AGGRESSIVE_PROBS, family: str = "hampel",
                       conv_tol: float = 1e-4, max_iter: int = 100) -> RtbConfig:
    """Robust defaults: median/MAD preprocessing with Hampel weighting."""
    hp = ModelHyperparams(h_x=h_x, h_y=h_y, eta_x=eta_x, eta_y=eta_y,
                          center_kind="median", scale_kind="mad")
    return RtbConfig(hyperparams=hp,
                     weight_spec=WeightFunctionSpec(family=family, probs=probs),
                     conv_tol=conv_tol, max_iter=max_iter)


@dataclass(frozen=True)
class RtbFit:
    """A fitted robust model plus its case-weight diagnostics.

    ``w_combined`` is exactly the elementwise product of the per-block
    weights; all weights lie in [floor, 1]. ``coef_norm_trace`` records
    the squared coefficient norm of every inner fit.
    """

    model: TwoblockModel
    wX: np.ndarray
    wY: np.ndarray
    w_combined: np.ndarray
    iterations: int
    converged: bool
    coef_norm_trace: np.ndarray


def reweight_rows(Z, w) -> np.ndarray:
    """Multiply row i by sqrt(w_i)."""
    Z = np.asarray(Z, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.shape[0] != Z.shape[0]:
        raise ValueError("weight vector length must match the row count")
    if np.any(w <= 0.0):
        raise ValueError("weights must be strictly positive")
    return Z * np.sqrt(w)[:, None]


def unweight_scores(S, w) -> np.ndarray:
    """Divide row i by sqrt(w_i), undoing :func:`reweight_rows`."""
    S = np.asarray(S, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.shape[0] != S.shape[0]:
        raise ValueError("weight vector length must match the row count")
    if np.any(w <= 0.0):
        raise ValueError("weights must be strictly positive")
    return S / np.sqrt(w)[:, None]


def _check_not_degenerate(w: np.ndarray, floor: float, block: str) -> None:
    if np.all(w <= floor):
        raise DegenerateWeightsError(block)


def fit_rtb(X, Y, cfg: RtbConfig) -> RtbFit:
    """Robust two-block fit by iterative reweighting.

    Non-convergence within ``cfg.max_iter`` is not an error; the returned
    fit is flagged ``converged=False``. Degenerate weights (a whole block
    floored) and zero-MAD score columns do raise.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must have the same number of rows")
    if X.shape[0] < 4:
        raise ValueError("robust fitting needs at least four rows")

    hp = cfg.hyperparams
    spec = cfg.weight_spec
    floor = cfg.weight_floor

    x_pre = fit_preprocess(X, hp.center_kind, hp.scale_kind)
    y_pre = fit_preprocess(Y, hp.center_kind, hp.scale_kind)
    Xs = apply_preprocess(X, x_pre)
    Ys = apply_preprocess(Y, y_pre)

    wX = starting_weights(Xs, spec, floor=floor)
    wY = starting_weights(Ys, spec, floor=floor)
    _check_not_degenerate(wX, floor, "X")
    _check_not_degenerate(wY, floor, "Y")

    inner_hp = replace(hp, center_kind="none", scale_kind="none")
    trace: list[float] = []
    prev_norm_sq: float | None = None
    converged = False
    inner = None
    cx = cy = None
    T_uw = U_uw = None

    for _ in range(cfg.max_iter):
        cx = wX @ Xs / wX.sum()
        cy = wY @ Ys / wY.sum()
        Xw = reweight_rows(Xs - cx, wX)
        Yw = reweight_rows(Ys - cy, wY)
        inner = fit_twoblock(Xw, Yw, inner_hp)
        norm_sq = float(np.sum(inner.B ** 2))
        trace.append(norm_sq)

        T_uw = unweight_scores(inner.T, wX)
        U_uw = unweight_scores(inner.U, wY)
        wX = distance_weights(score_distances(T_uw), spec, floor=floor)
        wY = distance_weights(score_distances(U_uw), spec, floor=floor)
        _check_not_degenerate(wX, floor, "X")
        _check_not_degenerate(wY, floor, "Y")

        if prev_norm_sq is not None:
            if norm_sq < 1e-12:
                converged = True
                break
            if abs(norm_sq - prev_norm_sq) / max(prev_norm_sq, 1e-12) < cfg.conv_tol:
                converged = True
                break
        prev_norm_sq = norm_sq

    # Compose the inner fit (weighted-mean centred, unscaled) with the
    # initial robust preprocessing into a model on the original scale.
    sx, sy = x_pre.scales, y_pre.scales
    B = inner.B * (sy[None, :] / sx[:, None])
    x_centers = x_pre.centers + sx * cx
    y_centers = y_pre.centers + sy * cy
    intercept = y_centers - x_centers @ B
    x_composed = PreprocessParams(hp.center_kind, hp.scale_kind, x_centers, sx)
    y_composed = PreprocessParams(hp.center_kind, hp.scale_kind, y_centers, sy)
    model = TwoblockModel(
        W=inner.W, V=inner.V, T=T_uw, U=U_uw, P=inner.P, Q=inner.Q,
        B=B, intercept=intercept,
        x_preprocess=x_composed, y_preprocess=y_composed,
        hyperparams=hp,
        x_rotation=inner.x_rotation, y_rotation=inner.y_rotation,
    )
    return RtbFit(
        model=model, wX=wX, wY=wY, w_combined=wX * wY,
        iterations=len(trace), converged=converged,
        coef_norm_trace=np.asarray(trace),
    )


def fit_to_dict(fit: RtbFit) -> dict:
    """Model document extended with case weights and the iteration trace."""
    doc = model_to_dict(fit.model)
    doc["kind"] = "rtb"
    doc["wX"] = fit.wX.tolist()
    doc["wY"] = fit.wY.tolist()
    doc["w_combined"] = fit.w_combined.tolist()
    doc["iterations"] = fit.iterations
    doc["converged"] = fit.converged
    doc["coef_norm_trace"] = fit.coef_norm_trace.tolist()
    return doc


def fit_from_dict(doc: dict) -> RtbFit:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported format version {doc.get('format_version')!r}")
    if doc.get("kind") != "rtb":
        raise ValueError(f"not a robust fit document ({doc.get('kind')!r})")
    model_doc = dict(doc)
    model_doc["kind"] = "twoblock"
    model = model_from_dict(model_doc)
    return RtbFit(
        model=model,
        wX=np.asarray(doc["wX"], dtype=float),
        wY=np.asarray(doc["wY"], dtype=float),
        w_combined=np.asarray(doc["w_combined"], dtype=float),
        iterations=int(doc["iterations"]),
        converged=bool(doc["converged"]),
        coef_norm_trace=np.asarray(doc["coef_norm_trace"], dtype=float),
    )


def save_fit(fit: RtbFit, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fit_to_dict(fit), fh)


def load_fit(path) -> RtbFit:
    with open(path, "r", encoding="utf-8") as fh:
        return fit_from_dict(json.load(fh))


def export_weights_csv(fit: RtbFit, path) -> None:
    """Case-weight diagnostics as CSV: index, wX, wY, w_combined."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "wX", "wY", "w_combined"])
        for i, (a, b, c) in enumerate(zip(fit.wX, fit.wY, fit.w_combined)):
            writer.writerow([i, repr(float(a)), repr(float(b)), repr(float(c))])
