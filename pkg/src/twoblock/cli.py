"""Command-line front-end: fit, predict, simulate, cv and weights.

CSV in, CSV/JSON out. All floating-point output uses the shortest decimal
representation that round-trips exactly, so identical invocations with
identical seeds produce byte-identical files. Errors go to stderr with an
``ERROR:`` prefix; exit codes are 0 (success), 1 (usage) and 2 (data or
numeric failure).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .core import ModelHyperparams, fit_twoblock, model_from_dict, model_to_dict
from .evaluate import MethodSpec, cross_validate, cv_entries_to_csv, \
    run_scenario_grid, scenario_results_to_csv
from .rtb import RtbConfig, fit_from_dict, fit_rtb, fit_to_dict
from .simulate import CONTAMINATION_TARGETS, SimulationConfig
from .weighting import CUTOFF_PRESETS, WeightFunctionSpec

METHOD_NAMES = ("tb", "tb-sparse", "rtb", "rtb-sparse")

FLAG_THRESHOLD = 0.5  # combined weight below which a case is flagged


class CsvFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


def _fmt(x: float) -> str:
    return repr(float(x))


def load_matrix_csv(path, header: str = "auto"):
    """Read a rectangular numeric CSV; returns (matrix, names or None).

    A non-numeric first row is treated as a header unless ``header`` is
    "no". Ragged rows and non-numeric body cells raise
    :class:`CsvFormatError` with the offending line number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh)]
    rows = [(i + 1, row) for i, row in enumerate(rows) if row and row != [""]]
    if not rows:
        raise CsvFormatError(path, 1, "file contains no data")
    names = None
    first_line, first = rows[0]
    if header != "no":
        try:
            [float(cell) for cell in first]
        except ValueError:
            if header == "auto" or header == "yes":
                names = [cell.strip() for cell in first]
                rows = rows[1:]
                if not rows:
                    raise CsvFormatError(path, first_line,
                                         "file contains a header but no data")
    width = len(rows[0][1])
    data = np.empty((len(rows), width))
    for i, (line, row) in enumerate(rows):
        if len(row) != width:
            raise CsvFormatError(path, line,
                                 f"expected {width} fields, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise CsvFormatError(path, line,
                                     f"non-numeric value {cell!r}") from None
    return data, names


def save_matrix_csv(path, M, names=None) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if names is not None:
            writer.writerow(names)
        for row in M:
            writer.writerow([_fmt(v) for v in row])


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1, not argparse's default 2
    def error(self, message):
        print(f"ERROR: {message}", file=sys.stderr)
        self.print_usage(sys.stderr)
        sys.exit(1)


def _read_config(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CsvFormatError(path, lineno, "expected key=value")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _convert(text: str, typ):
    if typ is bool:
        return text.strip().lower() in ("1", "true", "yes", "on")
    return typ(text)


class _Options:
    """Merged option lookup: command line beats config file beats default."""

    def __init__(self, args, config: dict):
        self.args = args
        self.config = config

    def get(self, name: str, typ, default=None):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.config:
            return _convert(self.config[name], typ)
        return default


def _add_io_flags(sub, x=True, y=True, model=False):
    if x:
        sub.add_argument("--x", help="predictor block CSV")
    if y:
        sub.add_argument("--y", help="response block CSV")
    if model:
        sub.add_argument("--model", help="model JSON path")
    sub.add_argument("--no-header", action="store_true", default=None,
                     help="treat the first CSV row as data even if non-numeric")
    sub.add_argument("--config", help="key=value file with flag defaults")


def _add_hyper_flags(sub):
    sub.add_argument("--method", choices=METHOD_NAMES)
    sub.add_argument("--h-x", type=int, dest="h_x")
    sub.add_argument("--h-y", type=int, dest="h_y")
    sub.add_argument("--eta-x", type=float, dest="eta_x")
    sub.add_argument("--eta-y", type=float, dest="eta_y")
    sub.add_argument("--center", choices=("mean", "median", "l1median"))
    sub.add_argument("--scale", choices=("none", "std", "mad", "tau2"))
    sub.add_argument("--cutoffs", choices=tuple(CUTOFF_PRESETS),
                     help="cutoff probability preset for robust weighting")
    sub.add_argument("--weight-family", dest="weight_family",
                     choices=("hampel", "huber", "fair", "identity"))
    sub.add_argument("--conv-tol", type=float, dest="conv_tol")
    sub.add_argument("--max-iter", type=int, dest="max_iter")


def build_parser() -> _Parser:
    parser = _Parser(prog="twoblock",
                     description="two-block dimension reduction toolbox")
    subs = parser.add_subparsers(dest="command", required=True)

    fit = subs.add_parser("fit", help="fit a model from X and Y CSV files")
    _add_io_flags(fit, model=True)
    _add_hyper_flags(fit)

    pred = subs.add_parser("predict", help="predict responses from a model")
    _add_io_flags(pred, y=False, model=True)
    pred.add_argument("--output", help="destination CSV for predictions")

    sim = subs.add_parser("simulate", help="run a simulation scenario grid")
    sim.add_argument("--config", help="key=value file with flag defaults")
    for flag, typ in (("--n", int), ("--k", int), ("--q", int),
                      ("--p-signal", int), ("--p-noise", int),
                      ("--sigma-e", float), ("--sigma-f", float),
                      ("--contamination", float), ("--shift", float),
                      ("--repeats", int), ("--seed", int)):
        sim.add_argument(flag, type=typ, dest=flag[2:].replace("-", "_"))
    sim.add_argument("--target", choices=CONTAMINATION_TARGETS)
    sim.add_argument("--methods", help="comma list from " + ",".join(METHOD_NAMES))
    sim.add_argument("--eta-x", type=float, dest="eta_x")
    sim.add_argument("--h-x", type=int, dest="h_x")
    sim.add_argument("--h-y", type=int, dest="h_y")
    sim.add_argument("--cutoffs", choices=tuple(CUTOFF_PRESETS))
    sim.add_argument("--output", help="destination CSV for scenario results")

    cv = subs.add_parser("cv", help="cross-validated hyperparameter search")
    _add_io_flags(cv)
    cv.add_argument("--method", choices=METHOD_NAMES)
    cv.add_argument("--folds", type=int)
    cv.add_argument("--robust", action="store_true", default=None,
                    help="trim the worst 10%% of casewise errors")
    cv.add_argument("--seed", type=int)
    cv.add_argument("--h-x-grid", dest="h_x_grid", help="comma list, e.g. 1,2,3")
    cv.add_argument("--h-y-grid", dest="h_y_grid")
    cv.add_argument("--eta-x-grid", dest="eta_x_grid")
    cv.add_argument("--eta-y-grid", dest="eta_y_grid")
    cv.add_argument("--center", choices=("mean", "median", "l1median"))
    cv.add_argument("--scale", choices=("none", "std", "mad", "tau2"))
    cv.add_argument("--cutoffs", choices=tuple(CUTOFF_PRESETS))
    cv.add_argument("--output", help="destination CSV for the grid table")
    cv.add_argument("--best", help="destination JSON for the winning parameters")

    wts = subs.add_parser("weights", help="robust fit case-weight diagnostics")
    _add_io_flags(wts)
    _add_hyper_flags(wts)
    wts.add_argument("--output", help="destination CSV for case weights")
    wts.add_argument("--flagged", help="destination CSV for flagged cases")

    return parser


def _require(opts: _Options, name: str, flag: str):
    value = opts.get(name, str)
    if value is None:
        raise UsageError(f"missing required option {flag}")
    return value


class UsageError(Exception):
    pass


def _load_config(args) -> dict:
    path = getattr(args, "config", None)
    return _read_config(path) if path else {}


def _header_mode(opts: _Options) -> str:
    return "no" if opts.get("no_header", bool, False) else "auto"


def _method_defaults(method: str):
    sparse = method.endswith("-sparse")
    robust = method.startswith("rtb")
    return {
        "eta_x": 0.5 if sparse else 0.0,
        "eta_y": 0.0,
        "center": "median" if robust else "mean",
        "scale": "mad" if robust else "std",
    }


def _resolve_hyperparams(opts: _Options, method: str) -> ModelHyperparams:
    d = _method_defaults(method)
    return ModelHyperparams(
        h_x=opts.get("h_x", int, 1),
        h_y=opts.get("h_y", int, 1),
        eta_x=opts.get("eta_x", float, d["eta_x"]),
        eta_y=opts.get("eta_y", float, d["eta_y"]),
        center_kind=opts.get("center", str, d["center"]),
        scale_kind=opts.get("scale", str, d["scale"]),
    )


def _weight_spec(opts: _Options) -> WeightFunctionSpec:
    preset = opts.get("cutoffs", str, "aggressive")
    if preset not in CUTOFF_PRESETS:
        raise UsageError(f"unknown cutoff preset {preset!r}")
    family = opts.get("weight_family", str, "hampel")
    return WeightFunctionSpec(family=family, probs=CUTOFF_PRESETS[preset])


def _fit_from_options(opts: _Options, default_method: str = "tb"):
    """Shared fit path for the fit and weights subcommands."""
    method = opts.get("method", str, default_method)
    if method not in METHOD_NAMES:
        raise UsageError(f"unknown method {method!r}")
    header = _header_mode(opts)
    X, x_names = load_matrix_csv(_require(opts, "x", "--x"), header)
    Y, y_names = load_matrix_csv(_require(opts, "y", "--y"), header)
    hp = _resolve_hyperparams(opts, method)
    if method.startswith("rtb"):
        cfg = RtbConfig(hyperparams=hp, weight_spec=_weight_spec(opts),
                        conv_tol=opts.get("conv_tol", float, 1e-4),
                        max_iter=opts.get("max_iter", int, 100))
        fit = fit_rtb(X, Y, cfg)
        model = fit.model
    else:
        fit = None
        model = fit_twoblock(X, Y, hp)
    return method, model, fit, x_names, y_names


def _sparsity_line(label: str, M: np.ndarray) -> str:
    nonzero = [int(np.sum(np.abs(M[:, j]) > 1e-12)) for j in range(M.shape[1])]
    return (f"{label} nonzeros per component: "
            + ", ".join(str(c) for c in nonzero) + f" (of {M.shape[0]})")


def _cmd_fit(args) -> int:
    opts = _Options(args, _load_config(args))
    method, model, fit, x_names, y_names = _fit_from_options(opts)
    out = _require(opts, "model", "--model")
    if fit is not None:
        doc = fit_to_dict(fit)
    else:
        doc = model_to_dict(model)
    if x_names:
        doc["x_names"] = x_names
    if y_names:
        doc["y_names"] = y_names
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    hp = model.hyperparams
    print(f"method: {method}")
    print(f"X: {model.n_x_vars} variables, Y: {model.n_y_vars} variables, "
          f"{model.T.shape[0]} cases")
    print(f"components: h_x={hp.h_x} h_y={hp.h_y}, "
          f"eta_x={_fmt(hp.eta_x)} eta_y={_fmt(hp.eta_y)}")
    print(f"preprocessing: center={hp.center_kind} scale={hp.scale_kind}")
    print(_sparsity_line("W", model.W))
    print(_sparsity_line("V", model.V))
    if fit is not None:
        print(f"converged: {'yes' if fit.converged else 'no'} "
              f"(iterations: {fit.iterations})")
        if not fit.converged:
            print(f"WARNING: robust fit did not converge within "
                  f"{fit.iterations} iterations", file=sys.stderr)
    print(f"model written to {out}")
    return 0


def _load_model_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    kind = doc.get("kind")
    if kind == "rtb":
        fit = fit_from_dict(doc)
        return fit.model, fit, doc
    return model_from_dict(doc), None, doc


def _cmd_predict(args) -> int:
    opts = _Options(args, _load_config(args))
    model, _, doc = _load_model_json(_require(opts, "model", "--model"))
    X, _ = load_matrix_csv(_require(opts, "x", "--x"), _header_mode(opts))
    yhat = model.predict(X)
    out = _require(opts, "output", "--output")
    save_matrix_csv(out, yhat, names=doc.get("y_names"))
    print(f"predictions written to {out}")
    return 0


def _cmd_simulate(args) -> int:
    opts = _Options(args, _load_config(args))
    cfg = SimulationConfig(
        n=opts.get("n", int, 100),
        k=opts.get("k", int, 3),
        q=opts.get("q", int, 4),
        p_signal=opts.get("p_signal", int, 20),
        p_noise=opts.get("p_noise", int, 0),
        sigma_e=opts.get("sigma_e", float, 0.5),
        sigma_f=opts.get("sigma_f", float, 0.5),
        contamination_fraction=opts.get("contamination", float, 0.0),
        contamination_target=opts.get("target", str, "none"),
        shift_magnitude=opts.get("shift", float, 10.0),
        seed=opts.get("seed", int, 0),
    )
    names = opts.get("methods", str, ",".join(METHOD_NAMES)).split(",")
    eta_x = opts.get("eta_x", float, 0.5)
    probs = CUTOFF_PRESETS[opts.get("cutoffs", str, "aggressive")]
    h_x = opts.get("h_x", int, None)
    h_y = opts.get("h_y", int, None)
    methods = []
    for name in names:
        name = name.strip()
        if name not in METHOD_NAMES:
            raise UsageError(f"unknown method {name!r}")
        methods.append(MethodSpec(
            name, robust=name.startswith("rtb"),
            eta_x=eta_x if name.endswith("-sparse") else 0.0,
            h_x=h_x, h_y=h_y, probs=probs,
        ))
    results = run_scenario_grid([cfg], methods,
                                repeats=opts.get("repeats", int, 10),
                                seed=opts.get("seed", int, 0))
    table = scenario_results_to_csv(results)
    out = _require(opts, "output", "--output")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(table)
    print(f"scenario results written to {out}")
    return 0


def _parse_grid(text: str, typ):
    return [typ(part) for part in text.split(",") if part.strip()]


def _cmd_cv(args) -> int:
    opts = _Options(args, _load_config(args))
    method = opts.get("method", str, "tb")
    if method not in METHOD_NAMES:
        raise UsageError(f"unknown method {method!r}")
    d = _method_defaults(method)
    header = _header_mode(opts)
    X, _ = load_matrix_csv(_require(opts, "x", "--x"), header)
    Y, _ = load_matrix_csv(_require(opts, "y", "--y"), header)
    center = opts.get("center", str, d["center"])
    scale = opts.get("scale", str, d["scale"])
    h_x_grid = _parse_grid(opts.get("h_x_grid", str, "1,2,3"), int)
    h_y_grid = _parse_grid(opts.get("h_y_grid", str, "1"), int)
    default_eta = _fmt(d["eta_x"])
    eta_x_grid = _parse_grid(opts.get("eta_x_grid", str, default_eta), float)
    eta_y_grid = _parse_grid(opts.get("eta_y_grid", str, "0.0"), float)
    grid = [
        ModelHyperparams(h_x=hx, h_y=hy, eta_x=ex, eta_y=ey,
                         center_kind=center, scale_kind=scale)
        for hx in h_x_grid for hy in h_y_grid
        for ex in eta_x_grid for ey in eta_y_grid
    ]
    best, entries = cross_validate(
        X, Y, grid,
        folds=opts.get("folds", int, 5),
        robust=opts.get("robust", bool, False),
        seed=opts.get("seed", int, 0),
        estimator="rtb" if method.startswith("rtb") else "tb",
        weight_spec=_weight_spec(opts) if method.startswith("rtb") else None,
    )
    out = _require(opts, "output", "--output")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(cv_entries_to_csv(entries))
    best_path = opts.get("best", str)
    best_score = min(e.score for e in entries)
    if best_path:
        with open(best_path, "w", encoding="utf-8") as fh:
            json.dump({
                "h_x": best.h_x, "h_y": best.h_y,
                "eta_x": best.eta_x, "eta_y": best.eta_y,
                "center_kind": best.center_kind, "scale_kind": best.scale_kind,
                "score": best_score,
            }, fh)
    print(f"grid table written to {out}")
    print(f"best: h_x={best.h_x} h_y={best.h_y} eta_x={_fmt(best.eta_x)} "
          f"eta_y={_fmt(best.eta_y)} (score {_fmt(best_score)})")
    return 0


def _cmd_weights(args) -> int:
    opts = _Options(args, _load_config(args))
    method = opts.get("method", str, "rtb")
    if not method.startswith("rtb"):
        raise UsageError("the weights command needs a robust method (rtb, rtb-sparse)")
    _, model, fit, _, _ = _fit_from_options(opts, default_method="rtb")
    out = _require(opts, "output", "--output")
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "wX", "wY", "w_combined"])
        for i in range(fit.wX.shape[0]):
            writer.writerow([i, _fmt(fit.wX[i]), _fmt(fit.wY[i]),
                             _fmt(fit.w_combined[i])])
    flagged = np.flatnonzero(fit.w_combined < FLAG_THRESHOLD)
    flagged_path = opts.get("flagged", str)
    if flagged_path:
        with open(flagged_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "w_combined"])
            for i in flagged:
                writer.writerow([int(i), _fmt(fit.w_combined[i])])
    if not fit.converged:
        print(f"WARNING: robust fit did not converge within "
              f"{fit.iterations} iterations", file=sys.stderr)
    print(f"case weights written to {out}")
    print(f"flagged cases (w_combined < {FLAG_THRESHOLD}): "
          + (", ".join(str(int(i)) for i in flagged) if flagged.size else "none"))
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "simulate": _cmd_simulate,
    "cv": _cmd_cv,
    "weights": _cmd_weights,
}


def dispatch(args) -> int:
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, ArithmeticError, OSError, KeyError,
            np.linalg.LinAlgError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
