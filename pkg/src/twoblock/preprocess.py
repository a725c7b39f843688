"""Robust location and scale estimation for column-wise data preprocessing.

Data blocks are centred and scaled column by column before any component
extraction. Classical estimators (mean, standard deviation) sit next to
robust ones (median, MAD, the l1 median, the tau scale) behind a single
``PreprocessParams`` container, so downstream code never needs to know
which estimator produced the numbers.

A zero scale estimate is always a hard error: silently substituting a
positive value would corrupt every distance computed downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAD_CONSISTENCY = 1.4826  # makes the MAD consistent for the normal sd

CENTER_KINDS = ("none", "mean", "median", "l1median")
SCALE_KINDS = ("none", "std", "mad", "tau2")

TAU_LOCATION_CUTOFF = 4.5
TAU_SCALE_CUTOFF = 3.0


class ZeroScaleError(ValueError):
    """A column produced a zero (or non-finite) scale estimate."""

    def __init__(self, column: int, kind: str):
        super().__init__(
            f"zero scale: column {column} has no spread under {kind!r}"
        )
        self.column = column
        self.kind = kind


class ConvergenceError(RuntimeError):
    """An iterative estimator ran out of iterations.

    Carries the last iterate so callers can inspect how far it got.
    """

    def __init__(self, message: str, last_iterate: np.ndarray):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class PreprocessParams:
    """Fitted per-column centers and scales for one data block.

    ``scales`` are strictly positive; construction fails otherwise.
    Instances are immutable and safe to share between threads.
    """

    center_kind: str
    scale_kind: str
    centers: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        scales = np.asarray(self.scales, dtype=float)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "scales", scales)
        if self.center_kind not in CENTER_KINDS:
            raise ValueError(f"unknown center kind {self.center_kind!r}")
        if self.scale_kind not in SCALE_KINDS:
            raise ValueError(f"unknown scale kind {self.scale_kind!r}")
        if centers.ndim != 1 or scales.ndim != 1 or centers.shape != scales.shape:
            raise ValueError("centers and scales must be 1-d vectors of equal length")
        bad = np.flatnonzero(~(scales > 0.0) | ~np.isfinite(scales))
        if bad.size:
            raise ZeroScaleError(int(bad[0]), self.scale_kind)


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.size == 0:
        raise ValueError("expected a nonempty 2-d matrix")
    return X


def column_location(X, kind: str = "median") -> np.ndarray:
    """Per-column location estimate, either ``mean`` or ``median``.

    The median uses the midpoint-of-two-middle-values convention for even
    sample sizes.
    """
    X = _as_matrix(X)
    if kind == "mean":
        return X.mean(axis=0)
    if kind == "median":
        return np.median(X, axis=0)
    raise ValueError(f"unknown column location kind {kind!r}")


def column_mad(X, consistent: bool = True) -> np.ndarray:
    """Per-column median absolute deviation from the column median.

    Parameters
    ----------
    X : array, shape (n, p)
        Data with at least two rows.
    consistent : bool
        Multiply by 1.4826 so the estimate matches the standard deviation
        for normal data. Pass False for the raw MAD.

    Raises
    ------
    ZeroScaleError
        If any column has zero MAD (for example a constant column).
    """
    X = _as_matrix(X)
    if X.shape[0] < 2:
        raise ValueError("MAD needs at least two rows")
    med = np.median(X, axis=0)
    mad = np.median(np.abs(X - med), axis=0)
    bad = np.flatnonzero(mad <= 0.0)
    if bad.size:
        raise ZeroScaleError(int(bad[0]), "mad")
    return MAD_CONSISTENCY * mad if consistent else mad


def l1_median(X, tol: float = 1e-8, max_iter: int = 500) -> np.ndarray:
    """Point minimizing the sum of Euclidean distances to the rows of X.

    Uses Weiszfeld iteration started at the coordinate-wise median, with
    the modified step of Vardi and Zhang whenever the current iterate
    coincides with a data row. Convergence is declared when successive
    iterates move less than ``tol`` in Euclidean norm.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations pass without convergence; the error
        carries the last iterate.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    X = _as_matrix(X)
    if X.shape[0] == 1:
        return X[0].copy()
    y = np.median(X, axis=0)
    for _ in range(max_iter):
        diff = X - y
        dist = np.linalg.norm(diff, axis=1)
        eps = 1e-12 * (1.0 + dist.max())
        far = dist > eps
        if not np.any(far):
            return y
        inv = 1.0 / dist[far]
        tilde = (X[far] * inv[:, None]).sum(axis=0) / inv.sum()
        if far.all():
            y_new = tilde
        else:
            # Iterate sits on a data point of multiplicity k; it is
            # optimal when the pull of the remaining points is at most k.
            r_vec = (diff[far] * inv[:, None]).sum(axis=0)
            r = np.linalg.norm(r_vec)
            k = int((~far).sum())
            if r <= k:
                return y
            y_new = (1.0 - k / r) * tilde + (k / r) * y
        if np.linalg.norm(y_new - y) < tol:
            return y_new
        y = y_new
    raise ConvergenceError(
        f"l1 median did not converge within {max_iter} iterations", y
    )


def _rho_consistency(c: float) -> float:
    # E[min(Z^2, c^2)] for standard normal Z
    phi = math.exp(-0.5 * c * c) / math.sqrt(2.0 * math.pi)
    cdf = 0.5 * (1.0 + math.erf(c / math.sqrt(2.0)))
    return (2.0 * cdf - 1.0) - 2.0 * c * phi + 2.0 * c * c * (1.0 - cdf)


def tau2_scale(x, c_location: float = TAU_LOCATION_CUTOFF,
               c_scale: float = TAU_SCALE_CUTOFF) -> float:
    """Robust, efficient univariate scale estimate.

    Construction: start from the consistent MAD ``s0``, compute a weighted
    location with the biweight-type weight ``(1 - (u/c_location)^2)^2`` on
    ``|u| <= c_location``, then average the bounded square
    ``min(u^2, c_scale^2)`` of the rescaled residuals. The result is
    divided by the normal expectation of that bounded square so the
    estimate matches the standard deviation for normal data.

    Raises
    ------
    ZeroScaleError
        If the MAD of ``x`` is zero.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("tau2 scale needs at least two values")
    med = float(np.median(x))
    mad = float(np.median(np.abs(x - med)))
    if mad <= 0.0:
        raise ZeroScaleError(0, "tau2")
    s0 = MAD_CONSISTENCY * mad
    u = (x - med) / s0
    w = np.where(np.abs(u) <= c_location, (1.0 - (u / c_location) ** 2) ** 2, 0.0)
    mu = float(np.sum(w * x) / np.sum(w))
    rho = np.minimum(((x - mu) / s0) ** 2, c_scale ** 2)
    tau_sq = s0 ** 2 * float(np.mean(rho)) / _rho_consistency(c_scale)
    return math.sqrt(tau_sq)


def fit_preprocess(X, center_kind: str = "median",
                   scale_kind: str = "mad") -> PreprocessParams:
    """Estimate per-column centers and scales for one data block.

    ``apply_preprocess`` with the returned parameters produces columns with
    location about 0 and, when scaled, scale about 1 under the same
    estimators. ``scale_kind='none'`` sets all scales to one.
    """
    X = _as_matrix(X)
    p = X.shape[1]
    if center_kind == "none":
        centers = np.zeros(p)
    elif center_kind == "l1median":
        centers = l1_median(X)
    else:
        centers = column_location(X, center_kind)
    if scale_kind == "none":
        scales = np.ones(p)
    elif scale_kind == "std":
        if X.shape[0] < 2:
            raise ValueError("std scaling needs at least two rows")
        scales = X.std(axis=0, ddof=1)
        bad = np.flatnonzero(~(scales > 0.0) | ~np.isfinite(scales))
        if bad.size:
            raise ZeroScaleError(int(bad[0]), "std")
    elif scale_kind == "mad":
        scales = column_mad(X, consistent=True)
    elif scale_kind == "tau2":
        scales = np.empty(p)
        for j in range(p):
            try:
                scales[j] = tau2_scale(X[:, j])
            except ZeroScaleError as exc:
                raise ZeroScaleError(j, "tau2") from exc
    else:
        raise ValueError(f"unknown scale kind {scale_kind!r}")
    return PreprocessParams(center_kind, scale_kind, centers, scales)


def apply_preprocess(X, params: PreprocessParams) -> np.ndarray:
    """Elementwise ``(x - center) / scale``."""
    X = _as_matrix(X)
    if X.shape[1] != params.centers.shape[0]:
        raise ValueError(
            f"matrix has {X.shape[1]} columns, parameters expect "
            f"{params.centers.shape[0]}"
        )
    return (X - params.centers) / params.scales


def invert_preprocess(Z, params: PreprocessParams) -> np.ndarray:
    """Inverse of :func:`apply_preprocess`."""
    Z = _as_matrix(Z)
    if Z.shape[1] != params.centers.shape[0]:
        raise ValueError(
            f"matrix has {Z.shape[1]} columns, parameters expect "
            f"{params.centers.shape[0]}"
        )
    return Z * params.scales + params.centers
