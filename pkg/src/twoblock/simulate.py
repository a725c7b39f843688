"""Latent-variable data generator, contamination injection and fit metrics.

Data follow a true latent model: scores times orthonormal loadings plus
Gaussian noise for the X block, scores times a coefficient matrix plus
noise for the Y block, with optional pure-noise columns appended to X.
Outliers are additive shifts applied to a seeded random subset of rows in
either block or both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CONTAMINATION_TARGETS = ("none", "x_only", "y_only", "both")


@dataclass(frozen=True)
class SimulationConfig:
    """Generator parameters for one scenario."""

    n: int = 100
    k: int = 3
    q: int = 4
    p_signal: int = 20
    p_noise: int = 0
    sigma_e: float = 0.5
    sigma_f: float = 0.5
    contamination_fraction: float = 0.0
    contamination_target: str = "none"
    shift_magnitude: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.q < 1 or self.p_signal < 1 or self.p_noise < 0:
            raise ValueError("dimensions must be positive (p_noise may be zero)")
        if not 1 <= self.k <= min(self.p_signal, self.n):
            raise ValueError("k must satisfy 1 <= k <= min(p_signal, n)")
        if self.sigma_e < 0 or self.sigma_f < 0:
            raise ValueError("noise standard deviations must be nonnegative")
        if not 0.0 <= self.contamination_fraction <= 0.5:
            raise ValueError("contamination fraction must lie in [0, 0.5]")
        if self.contamination_target not in CONTAMINATION_TARGETS:
            raise ValueError(
                f"unknown contamination target {self.contamination_target!r}"
            )

    @property
    def p_total(self) -> int:
        return self.p_signal + self.p_noise


def generate_latent_parts(cfg: SimulationConfig, seed=None):
    """Raw draws of the latent model: (scores, loadings, C, E, F, noise_cols).

    Loadings have orthonormal columns (QR of a standard normal draw).
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    scores = rng.standard_normal((cfg.n, cfg.k))
    loadings, _ = np.linalg.qr(rng.standard_normal((cfg.p_signal, cfg.k)))
    coef = rng.standard_normal((cfg.k, cfg.q))
    E = cfg.sigma_e * rng.standard_normal((cfg.n, cfg.p_signal))
    F = cfg.sigma_f * rng.standard_normal((cfg.n, cfg.q))
    noise_cols = cfg.sigma_e * rng.standard_normal((cfg.n, cfg.p_noise))
    return scores, loadings, coef, E, F, noise_cols


def generate_latent_data(cfg: SimulationConfig, seed=None):
    """One clean draw: (X, Y, B_true, signal_mask).

    ``B_true`` is the population coefficient matrix, zero-padded over the
    uninformative columns; ``signal_mask`` marks the informative columns.
    """
    scores, loadings, coef, E, F, noise_cols = generate_latent_parts(cfg, seed)
    X = np.hstack([scores @ loadings.T + E, noise_cols])
    Y = scores @ coef + F
    B_true = np.vstack([loadings @ coef, np.zeros((cfg.p_noise, cfg.q))])
    signal_mask = np.zeros(cfg.p_total, dtype=bool)
    signal_mask[: cfg.p_signal] = True
    return X, Y, B_true, signal_mask


def _n_contaminated(fraction: float, n: int) -> int:
    raw = fraction * n
    # snap near-integer products before taking the ceiling so fractions
    # like 5/55 do not round up through floating-point noise
    if abs(raw - round(raw)) < 1e-9:
        return int(round(raw))
    return int(math.ceil(raw))


def contaminate(X, Y, cfg: SimulationConfig):
    """Shift a seeded random subset of rows by ``shift_magnitude``.

    Every entry of the targeted block(s) in a selected row is shifted by
    ``shift_magnitude`` with a random sign, so the contamination is not
    confined to a single direction that one extracted component could
    absorb. Returns copies plus the sorted contaminated indices.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Xc, Yc = X.copy(), Y.copy()
    if cfg.contamination_fraction == 0.0:
        return Xc, Yc, np.empty(0, dtype=int)
    if cfg.contamination_target == "none":
        raise ValueError("contamination fraction is positive but target is 'none'")
    n = X.shape[0]
    m = _n_contaminated(cfg.contamination_fraction, n)
    rng = np.random.default_rng([cfg.seed, 1])
    idx = np.sort(rng.permutation(n)[:m])
    if cfg.contamination_target in ("x_only", "both"):
        signs = rng.choice([-1.0, 1.0], size=(m, X.shape[1]))
        Xc[idx] += cfg.shift_magnitude * signs
    if cfg.contamination_target in ("y_only", "both"):
        signs = rng.choice([-1.0, 1.0], size=(m, Y.shape[1]))
        Yc[idx] += cfg.shift_magnitude * signs
    return Xc, Yc, idx


def mse_coefficients(B_hat, B_true) -> float:
    """Squared Frobenius norm of the coefficient error divided by p*q."""
    B_hat = np.asarray(B_hat, dtype=float)
    B_true = np.asarray(B_true, dtype=float)
    if B_hat.shape != B_true.shape:
        raise ValueError(
            f"shape mismatch: {B_hat.shape} vs {B_true.shape}"
        )
    return float(np.sum((B_hat - B_true) ** 2) / B_hat.size)


def f1_selection(W, signal_mask, threshold: float = 1e-12) -> float:
    """F1 score of variable selection read off the X-block weights.

    Variable j counts as selected when row j of ``W`` has any entry of
    magnitude above ``threshold``. Returns 0 when nothing is selected.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    signal_mask = np.asarray(signal_mask, dtype=bool)
    if W.shape[0] != signal_mask.shape[0]:
        raise ValueError("signal mask length must match the number of X variables")
    selected = np.any(np.abs(W) > threshold, axis=1)
    tp = int(np.sum(selected & signal_mask))
    fp = int(np.sum(selected & ~signal_mask))
    fn = int(np.sum(~selected & signal_mask))
    if tp + fp == 0 or tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)
