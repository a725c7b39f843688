"""Case weighting from distance cutoffs anchored to chi-square quantiles.

Case weights in [0, 1] are derived from nonnegative outlyingness distances
through a downweighting function (Hampel, Huber, Fair or identity). Cutoff
values are not free parameters: they are resolved from quantile
probabilities of the chi distribution so that, for well-behaved data, the
weight boundaries are crossed at the nominal probabilities.

Distances handled here are always standardized by their median before the
weight function is applied, which makes them dimensionless univariate
outlyingness measures. A cutoff for probability ``p`` therefore resolves
to ``sqrt(q_chi2(p, df) / q_chi2(0.5, df))`` with ``df = 1`` throughout
the weighting pipeline: the same modified-z-score calibration whatever
the dimension the distances were computed in. This keeps nearly all
regular cases at full weight while gross outliers, whose standardized
distances sit far above the cutoffs, are floored.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .preprocess import ZeroScaleError, column_mad

WEIGHT_FAMILIES = ("hampel", "huber", "fair", "identity")

#: Cutoff probabilities for heavier expected contamination (the default).
AGGRESSIVE_PROBS = (0.75, 0.90, 0.95)
#: Lenient cutoff probabilities that keep almost all regular cases at weight 1.
STANDARD_PROBS = (0.95, 0.975, 0.999)

CUTOFF_PRESETS = {"aggressive": AGGRESSIVE_PROBS, "standard": STANDARD_PROBS}

WEIGHT_FLOOR = 1e-6


@dataclass(frozen=True)
class WeightFunctionSpec:
    """Downweighting family plus cutoff probabilities and resolved cutoffs.

    ``probs`` must be strictly increasing inside (0, 1). The Hampel family
    uses all three; Huber and Fair only use the first. ``resolved_cutoffs``
    stays None until :func:`resolve_cutoffs` fixes the cutoffs for a given
    distance distribution. Instances are immutable.
    """

    family: str = "hampel"
    probs: tuple = AGGRESSIVE_PROBS
    resolved_cutoffs: tuple | None = None

    def __post_init__(self):
        if self.family not in WEIGHT_FAMILIES:
            raise ValueError(f"unknown weight family {self.family!r}")
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if self.family != "identity":
            if len(probs) != 3:
                raise ValueError("probs must be a (p1, p2, p3) triple")
            if not all(0.0 < p < 1.0 for p in probs):
                raise ValueError("probs must lie strictly inside (0, 1)")
            if not (probs[0] < probs[1] < probs[2]):
                raise ValueError("probs must be strictly increasing")
        if self.resolved_cutoffs is not None:
            cuts = tuple(float(c) for c in self.resolved_cutoffs)
            object.__setattr__(self, "resolved_cutoffs", cuts)
            if not all(c > 0.0 for c in cuts):
                raise ValueError("resolved cutoffs must be positive")
            if any(a >= b for a, b in zip(cuts, cuts[1:])):
                raise ValueError("resolved cutoffs must be strictly increasing")


def chi_cutoffs(probs, df: int) -> tuple:
    """Square roots of chi-square quantiles, ``sqrt(q_chi2(p, df))``.

    ``probs`` must be strictly increasing inside (0, 1) and ``df >= 1``.
    """
    if df < 1:
        raise ValueError("df must be at least 1")
    probs = tuple(float(p) for p in probs)
    if not all(0.0 < p < 1.0 for p in probs):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    if any(a >= b for a, b in zip(probs, probs[1:])):
        raise ValueError("probabilities must be strictly increasing")
    quant = stats.chi2.ppf(probs, df)
    if not np.all(np.isfinite(quant)):
        raise ArithmeticError("chi-square quantile evaluation failed")
    return tuple(np.sqrt(quant))


def resolve_cutoffs(spec: WeightFunctionSpec, df: int) -> WeightFunctionSpec:
    """Fix the spec's cutoffs for median-standardized distances with ``df``.

    Returns a new spec; the identity family passes through untouched.
    """
    if spec.family == "identity":
        return spec
    median_cut = chi_cutoffs((0.5,), df)[0]
    cuts = tuple(c / median_cut for c in chi_cutoffs(spec.probs, df))
    return replace(spec, resolved_cutoffs=cuts)


def hampel_psi(d, c1: float, c2: float, c3: float):
    """Three-cutoff redescending weight for nonnegative distances.

    Weight 1 up to ``c1``, then ``c1/d`` up to ``c2``, then a linear decay
    ``c1 (c3 - d) / (d (c3 - c2))`` reaching 0 at ``c3``, and 0 beyond.
    Continuous on [0, inf). Accepts scalars or arrays.
    """
    if not (0.0 < c1 < c2 < c3):
        raise ValueError("cutoffs must satisfy 0 < c1 < c2 < c3")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0.0):
        raise ValueError("distances must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.select(
            [d <= c1, d <= c2, d <= c3],
            [1.0, c1 / d, c1 * (c3 - d) / (d * (c3 - c2))],
            default=0.0,
        )
    if w.ndim == 0:
        return float(w)
    return w


def weight_function(spec: WeightFunctionSpec, d) -> np.ndarray:
    """Elementwise weights in [0, 1] for a vector of nonnegative distances.

    Requires resolved cutoffs except for the identity family, which
    returns all ones.
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if np.any(d < 0.0):
        raise ValueError("distances must be nonnegative")
    if spec.family == "identity":
        return np.ones_like(d)
    if spec.resolved_cutoffs is None:
        raise ValueError("cutoffs have not been resolved for this spec")
    c1, c2, c3 = spec.resolved_cutoffs
    if spec.family == "hampel":
        return np.asarray(hampel_psi(d, c1, c2, c3))
    if spec.family == "huber":
        with np.errstate(divide="ignore"):
            return np.minimum(1.0, np.where(d > 0.0, c1 / d, np.inf))
    # fair
    return 1.0 / (1.0 + d / c1) ** 2


def distance_weights(d, spec: WeightFunctionSpec, df: int = 1,
                     floor: float = WEIGHT_FLOOR) -> np.ndarray:
    """Weights for raw distances: median-standardize, cut off, floor.

    The cutoffs are resolved for ``df`` via :func:`resolve_cutoffs`
    (``df = 1`` treats the standardized distance as a univariate
    outlyingness measure, the pipeline default); every weight is floored
    at ``floor`` so later unweighting never divides by zero.
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    med = float(np.median(d))
    if not med > 0.0:
        raise ValueError("median distance is zero, cannot standardize")
    w = weight_function(resolve_cutoffs(spec, df), d / med)
    return np.maximum(w, floor)


def starting_weights(Z_s, spec: WeightFunctionSpec,
                     floor: float = WEIGHT_FLOOR) -> np.ndarray:
    """Initial case weights for a robustly centred and scaled block.

    Casewise distances are the row norms divided by their median, with
    the univariate cutoff calibration of :func:`distance_weights`.
    """
    Z_s = np.asarray(Z_s, dtype=float)
    if Z_s.ndim != 2 or Z_s.shape[0] < 2:
        raise ValueError("expected a matrix with at least two rows")
    norms = np.linalg.norm(Z_s, axis=1)
    return distance_weights(norms, spec, floor=floor)


def score_distances(S) -> np.ndarray:
    """Diagonal robust Mahalanobis-type distances of score rows.

    Each column is centred by its median and scaled by its consistent MAD;
    the distance of a row is the Euclidean norm of the standardized
    coordinates. Raises :class:`ZeroScaleError` for a zero-MAD column.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.shape[0] < 2:
        raise ValueError("score distances need at least two rows")
    med = np.median(S, axis=0)
    mad = column_mad(S, consistent=True)
    return np.linalg.norm((S - med) / mad, axis=1)
