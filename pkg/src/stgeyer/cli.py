"""Command-line interface: ``stgeyer {simulate,fit,profile,study,gnz-check}``.

Exit status: 0 success, 1 unparsable input, 2 invalid configuration or
parameters, 3 runtime failure.  Messages go to standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .exceptions import DomainError, EstimationError, InvalidParameterError
from .fileio import (
    ConfigError,
    PatternFileError,
    atomic_write_text,
    load_config,
    read_pattern_csv,
    write_pattern_csv,
)
from .geometry import SpacetimeWindow
from .inference import (
    GNZ_GRID,
    IrregularParams,
    fit_logistic_likelihood,
    fit_pseudo,
    gnz_residual,
    profile_pseudo,
)
from .model import GeyerModel, ScaleComponent, TrendFunction
from .simulate import McmcConfig, make_rng, run_chain
from .study import OUTPUT_FILES, StudyConfig, rmse_table, run_study, write_study_outputs

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3

logger = logging.getLogger("stgeyer")


class UsageError(Exception):
    """Refusal that is the caller's to fix (exit status 2)."""


def window_from_config(cfg) -> SpacetimeWindow:
    w = cfg.get("window")
    return SpacetimeWindow() if w is None else SpacetimeWindow.from_dict(w)


def _trend(cfg, window, beta):
    raster = cfg["model"].get("trend_raster")
    if raster is None:
        return TrendFunction(beta)
    return TrendFunction(beta, np.asarray(raster, dtype=float), window)


def model_from_config(cfg, need_gamma=True) -> GeyerModel:
    """Build the truth model of a configuration.

    With ``need_gamma`` false the interaction strengths default to 1, which
    is enough for fitting (only ranges and saturations are used).
    """
    if "model" not in cfg:
        raise ConfigError("model: required section is missing", field="model")
    window = window_from_config(cfg)
    scales = []
    for j, sc in enumerate(cfg["model"]["scales"]):
        if need_gamma and "gamma" not in sc:
            raise ConfigError(f"model.scales[{j}].gamma: required for simulation", field=f"model.scales[{j}].gamma")
        scales.append(ScaleComponent(sc.get("gamma", 1.0), sc["r"], sc["q"], sc["s"]))
    if need_gamma and "beta" not in cfg["model"]:
        raise ConfigError("model.beta: required for simulation", field="model.beta")
    beta = cfg["model"].get("beta", 1.0)
    return GeyerModel(_trend(cfg, window, beta), tuple(scales), window)


def mcmc_from_config(cfg, seed) -> McmcConfig:
    m = dict(cfg.get("mcmc", {}))
    init = m.pop("initial", "poisson")
    if isinstance(init, dict):
        init = ("poisson", init["poisson"])
    return McmcConfig(seed=seed, initial=init, **m)


def _irregular(scales) -> IrregularParams:
    return IrregularParams(
        tuple(s["r"] for s in scales), tuple(s["q"] for s in scales), tuple(s["s"] for s in scales)
    )


def _seed(cfg, args) -> int:
    return int(args.seed if args.seed is not None else cfg.get("seed", 0))


def _trend_mu(cfg, window):
    if cfg.get("model", {}).get("trend_raster") is None:
        return None
    return _trend(cfg, window, 1.0)


def _refuse_existing(paths, overwrite):
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing and not overwrite:
        raise UsageError(f"refusing to overwrite {', '.join(existing)} (pass --overwrite)")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = _seed(cfg, args)
    model = model_from_config(cfg)
    mcmc = mcmc_from_config(cfg, seed)
    out = Path(args.out)
    targets = [out / "pattern.csv", out / "trace.csv"]
    _refuse_existing(targets, args.overwrite)
    trace = run_chain(model, mcmc)
    out.mkdir(parents=True, exist_ok=True)
    write_pattern_csv(targets[0], trace.final)
    trace.to_csv(targets[1])
    print(f"simulated {len(trace.final)} events -> {targets[0]}", file=sys.stderr)
    return EXIT_OK


def _fit_once(cfg, pattern, seed):
    fit_cfg = cfg.get("fit", {})
    window = pattern.window
    irregular = _irregular(cfg["model"]["scales"])
    method = fit_cfg.get("method", "pseudo")
    grid = fit_cfg.get("grid")
    if method == "pseudo":
        return fit_pseudo(pattern, irregular, _trend_mu(cfg, window), grid, fit_cfg.get("dummy_per_cell", 1))
    return fit_logistic_likelihood(
        pattern, irregular, _trend_mu(cfg, window), fit_cfg.get("rho"), make_rng(seed, 0, 1)
    )


def _read_pattern(path, cfg):
    return read_pattern_csv(path, window_from_config(cfg) if "window" in cfg else None)


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    if "model" not in cfg:
        raise ConfigError("model: required section is missing", field="model")
    pattern = _read_pattern(args.pattern, cfg)
    _refuse_existing([args.out], args.overwrite)
    fit = _fit_once(cfg, pattern, _seed(cfg, args))
    atomic_write_text(args.out, fit.to_json() + "\n")
    if not fit.converged:
        print(f"fit did not converge: {'; '.join(fit.diagnostics)}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_profile(args) -> int:
    cfg = load_config(args.config)
    fit_cfg = cfg.get("fit", {})
    if "candidates" not in fit_cfg:
        raise ConfigError("fit.candidates: required for profile", field="fit.candidates")
    pattern = _read_pattern(args.pattern, cfg)
    out = Path(args.out)
    targets = [out / "fit.json", out / "profile.csv"]
    _refuse_existing(targets, args.overwrite)
    result = profile_pseudo(
        pattern,
        [_irregular(c) for c in fit_cfg["candidates"]],
        _trend_mu(cfg, pattern.window),
        fit_cfg.get("grid"),
        fit_cfg.get("dummy_per_cell", 1),
    )
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(targets[0], result.fit.to_json() + "\n")
    result.to_csv(targets[1])
    return EXIT_OK


def study_config_from(cfg, seed) -> StudyConfig:
    study = cfg.get("study", {})
    fit_cfg = cfg.get("fit", {})
    return StudyConfig(
        model=model_from_config(cfg),
        n_replicates=study.get("n_replicates", 100),
        mcmc=mcmc_from_config(cfg, seed),
        methods=tuple(study.get("methods", ("pseudo", "logistic"))),
        seed=seed,
        grid=tuple(fit_cfg["grid"]) if "grid" in fit_cfg else None,
        dummy_per_cell=fit_cfg.get("dummy_per_cell", 1),
        rho=fit_cfg.get("rho"),
        name=study.get("name", "study"),
    )


def cmd_study(args) -> int:
    cfg = load_config(args.config)
    config = study_config_from(cfg, _seed(cfg, args))
    svg = cfg.get("study", {}).get("svg", False)
    out = Path(args.out)
    names = OUTPUT_FILES + (("boxplot.svg",) if svg else ())
    _refuse_existing([out / n for n in names], args.overwrite)
    report = run_study(config, threads=args.threads)
    write_study_outputs(report, out, svg=svg)
    try:
        sys.stderr.write(rmse_table(report).to_text())
    except ValueError as exc:
        print(f"no RMSE table: {exc}", file=sys.stderr)
    if not report.comparable:
        print("warning: more than 20% of fits failed; results are not comparable", file=sys.stderr)
    return EXIT_OK


def cmd_gnz(args) -> int:
    cfg = load_config(args.config)
    model = model_from_config(cfg)
    gcfg = cfg.get("gnz", {})
    grid = tuple(gcfg.get("grid", GNZ_GRID))
    seed = _seed(cfg, args)
    if args.pattern:
        pattern = _read_pattern(args.pattern, cfg)
        residuals = [gnz_residual(model, pattern, grid=grid)]
    else:
        mcmc = mcmc_from_config(cfg, seed)
        residuals = [
            gnz_residual(model, run_chain(model, mcmc, make_rng(seed, i, 0)).final, grid=grid)
            for i in range(gcfg.get("n_patterns", 200))
        ]
    res = np.array(residuals)
    se = float(res.std(ddof=1) / math.sqrt(len(res))) if len(res) > 1 else float("nan")
    summary = {
        "n_patterns": len(res),
        "grid": list(grid),
        "mean_residual": float(res.mean()),
        "standard_error": se,
        "within_3se": bool(abs(res.mean()) <= 3 * se) if len(res) > 1 else None,
        "residuals": [float(v) for v in res],
    }
    text = json.dumps(summary, indent=2) + "\n"
    if args.out:
        _refuse_existing([args.out], args.overwrite)
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stgeyer", description="Simulate and fit multi-scale space-time Geyer processes."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help, pattern=False, out_required=True):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=out_required, help=out_help)
        p.add_argument("--seed", type=int, help="override the configuration seed")
        p.add_argument("--overwrite", action="store_true", help="replace existing outputs")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        if pattern:
            p.add_argument("--pattern", required=pattern == "required", help="pattern CSV (x,y,t)")

    common(sub.add_parser("simulate", help="run the birth-death sampler"), "output directory")
    common(sub.add_parser("fit", help="fit one pattern"), "FitResult JSON path", pattern="required")
    common(sub.add_parser("profile", help="profile pseudo-likelihood"), "output directory", pattern="required")
    common(sub.add_parser("study", help="Monte Carlo estimator comparison"), "output directory")
    common(
        sub.add_parser("gnz-check", help="GNZ residual diagnostic"),
        "summary JSON path (stdout if omitted)",
        pattern="optional",
        out_required=False,
    )
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "profile": cmd_profile,
    "study": cmd_study,
    "gnz-check": cmd_gnz,
}


def main(argv=None) -> int:
    if argv is not None:
        argv = [str(a) for a in argv]
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE if exc.kind == "parse" else EXIT_VALIDATION
    except PatternFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (UsageError, InvalidParameterError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EstimationError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
