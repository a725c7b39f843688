"""Scenario grid runner and cross-validated hyperparameter search."""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ModelHyperparams, fit_twoblock
from .rtb import RtbConfig, fit_rtb
from .simulate import SimulationConfig, contaminate, generate_latent_data, \
    f1_selection, mse_coefficients
from .weighting import AGGRESSIVE_PROBS, WeightFunctionSpec

_FIT_ERRORS = (ValueError, RuntimeError, ArithmeticError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class MethodSpec:
    """One estimator entry of a scenario run.

    ``h_x`` and ``h_y`` default to the scenario's latent dimension and to
    min(k, q); preprocessing defaults to mean/std for classical fits and
    median/MAD for robust ones.
    """

    name: str
    robust: bool = False
    eta_x: float = 0.0
    eta_y: float = 0.0
    h_x: int | None = None
    h_y: int | None = None
    center_kind: str | None = None
    scale_kind: str | None = None
    weight_family: str = "hampel"
    probs: tuple = AGGRESSIVE_PROBS
    conv_tol: float = 1e-4
    max_iter: int = 100

    @property
    def sparse(self) -> bool:
        return self.eta_x > 0.0 or self.eta_y > 0.0

    def hyperparams_for(self, cfg: SimulationConfig) -> ModelHyperparams:
        center = self.center_kind or ("median" if self.robust else "mean")
        scale = self.scale_kind or ("mad" if self.robust else "std")
        return ModelHyperparams(
            h_x=self.h_x if self.h_x is not None else cfg.k,
            h_y=self.h_y if self.h_y is not None else min(cfg.k, cfg.q),
            eta_x=self.eta_x, eta_y=self.eta_y,
            center_kind=center, scale_kind=scale,
        )


def default_methods(eta_x: float = 0.5, eta_y: float = 0.0) -> list[MethodSpec]:
    """The four standard entries: tb, tb-sparse, rtb, rtb-sparse."""
    return [
        MethodSpec("tb"),
        MethodSpec("tb-sparse", eta_x=eta_x, eta_y=eta_y),
        MethodSpec("rtb", robust=True),
        MethodSpec("rtb-sparse", robust=True, eta_x=eta_x, eta_y=eta_y),
    ]


def fit_method(method: MethodSpec, X, Y, cfg: SimulationConfig):
    """Fit one method on one dataset; returns the fitted model."""
    hp = method.hyperparams_for(cfg)
    if method.robust:
        rtb_cfg = RtbConfig(
            hyperparams=hp,
            weight_spec=WeightFunctionSpec(family=method.weight_family,
                                           probs=method.probs),
            conv_tol=method.conv_tol, max_iter=method.max_iter,
        )
        return fit_rtb(X, Y, rtb_cfg).model
    return fit_twoblock(X, Y, hp)


@dataclass
class MethodScenarioResult:
    """Per-repeat metric values for one method in one scenario."""

    method: str
    mse_values: list = field(default_factory=list)
    f1_values: list | None = None
    failures: int = 0

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse_values)) if self.mse_values else float("nan")

    @property
    def sd_mse(self) -> float:
        # population sd so a single repeat reports 0
        return float(np.std(self.mse_values)) if self.mse_values else float("nan")

    @property
    def mean_f1(self):
        if self.f1_values is None:
            return None
        return float(np.mean(self.f1_values)) if self.f1_values else float("nan")


@dataclass
class ScenarioResult:
    """Aggregated metrics for one scenario configuration."""

    scenario_id: str
    config: SimulationConfig
    repeats: int
    methods: list


def scenario_id(cfg: SimulationConfig) -> str:
    pct = int(round(100 * cfg.contamination_fraction))
    return (f"n{cfg.n}_k{cfg.k}_q{cfg.q}_ps{cfg.p_signal}_pn{cfg.p_noise}"
            f"_c{pct}_{cfg.contamination_target}")


def run_scenario_grid(configs, methods, repeats: int, seed: int = 0):
    """Fit every method on fresh contaminated draws of every scenario.

    Repeat r of any scenario uses seed ``seed + r``, so all methods see
    identical data within a repeat and reruns with the same seed are
    deterministic. Failed fits are counted and excluded from aggregates.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    results = []
    for cfg in configs:
        per_method = {
            m.name: MethodScenarioResult(
                m.name, f1_values=[] if m.sparse else None)
            for m in methods
        }
        for r in range(repeats):
            rcfg = replace(cfg, seed=seed + r)
            X, Y, B_true, signal_mask = generate_latent_data(rcfg)
            Xc, Yc, _ = contaminate(X, Y, rcfg)
            for m in methods:
                entry = per_method[m.name]
                try:
                    model = fit_method(m, Xc, Yc, rcfg)
                except _FIT_ERRORS as exc:
                    entry.failures += 1
                    warnings.warn(
                        f"{m.name} failed on {scenario_id(rcfg)} repeat {r}: {exc}"
                    )
                    continue
                entry.mse_values.append(mse_coefficients(model.B, B_true))
                if entry.f1_values is not None:
                    entry.f1_values.append(f1_selection(model.W, signal_mask))
        results.append(ScenarioResult(
            scenario_id=scenario_id(cfg), config=cfg, repeats=repeats,
            methods=[per_method[m.name] for m in methods],
        ))
    return results


def scenario_results_to_csv(results) -> str:
    """Flat CSV table of the grid aggregates."""
    buf = io.StringIO()
    buf.write("scenario_id,p_total,contamination_fraction,contamination_target,"
              "method,mean_mse,sd_mse,mean_f1,failures,repeats\n")
    for res in results:
        cfg = res.config
        for m in res.methods:
            f1 = "" if m.mean_f1 is None else repr(m.mean_f1)
            buf.write(
                f"{res.scenario_id},{cfg.p_total},"
                f"{repr(cfg.contamination_fraction)},{cfg.contamination_target},"
                f"{m.method},{repr(m.mean_mse)},{repr(m.sd_mse)},{f1},"
                f"{m.failures},{res.repeats}\n"
            )
    return buf.getvalue()


@dataclass
class CvEntry:
    """Score of one grid point, with a flag for failed fits."""

    hyperparams: ModelHyperparams
    score: float
    failed: bool = False


def cross_validate(X, Y, grid, folds: int = 5, robust: bool = False,
                   seed: int = 0, estimator: str = "tb",
                   weight_spec: WeightFunctionSpec | None = None,
                   conv_tol: float = 1e-4, max_iter: int = 100):
    """K-fold search over a hyperparameter grid.

    Every row is held out exactly once. Casewise prediction errors are
    squared residuals standardized by each response's training-fold
    standard deviation and averaged over responses; a grid point's score
    is their mean, or a 10 percent upper-trimmed mean when ``robust`` is
    set. The ``estimator`` is either the classical fit ("tb") or the
    reweighted one ("rtb"); any fold failure sends that grid point to
    +inf with a warning.

    Ties are broken toward smaller h_x, then smaller h_y, then larger
    eta_x (then larger eta_y).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    grid = list(grid)
    if not grid:
        raise ValueError("hyperparameter grid is empty")
    if folds < 2:
        raise ValueError("folds must be at least 2")
    n = X.shape[0]
    if n < folds:
        raise ValueError("need at least one row per fold")
    if estimator not in ("tb", "rtb"):
        raise ValueError(f"unknown estimator {estimator!r}")

    rng = np.random.default_rng(seed)
    fold_indices = np.array_split(rng.permutation(n), folds)

    entries = []
    for hp in grid:
        errs = np.empty(n)
        failed = False
        for test_idx in fold_indices:
            mask = np.ones(n, dtype=bool)
            mask[test_idx] = False
            try:
                if estimator == "rtb":
                    cfg = RtbConfig(hyperparams=hp,
                                    weight_spec=weight_spec or WeightFunctionSpec(),
                                    conv_tol=conv_tol, max_iter=max_iter)
                    model = fit_rtb(X[mask], Y[mask], cfg).model
                else:
                    model = fit_twoblock(X[mask], Y[mask], hp)
                resid = Y[test_idx] - model.predict(X[test_idx])
                scale = Y[mask].std(axis=0, ddof=1)
                if np.any(~(scale > 0.0)):
                    raise ValueError("a response is constant on a training fold")
                errs[test_idx] = np.mean((resid / scale) ** 2, axis=1)
            except _FIT_ERRORS as exc:
                warnings.warn(f"grid point {hp} failed: {exc}")
                failed = True
                break
        if failed:
            entries.append(CvEntry(hp, float("inf"), failed=True))
            continue
        if robust:
            drop = int(0.1 * n)
            kept = np.sort(errs)[: n - drop] if drop else errs
            score = float(np.mean(kept))
        else:
            score = float(np.mean(errs))
        entries.append(CvEntry(hp, score))

    best = min(
        entries,
        key=lambda e: (e.score, e.hyperparams.h_x, e.hyperparams.h_y,
                       -e.hyperparams.eta_x, -e.hyperparams.eta_y),
    )
    return best.hyperparams, entries


def cv_entries_to_csv(entries) -> str:
    buf = io.StringIO()
    buf.write("h_x,h_y,eta_x,eta_y,center_kind,scale_kind,score,failed\n")
    for e in entries:
        hp = e.hyperparams
        buf.write(
            f"{hp.h_x},{hp.h_y},{repr(hp.eta_x)},{repr(hp.eta_y)},"
            f"{hp.center_kind},{hp.scale_kind},{repr(e.score)},{int(e.failed)}\n"
        )
    return buf.getvalue()
