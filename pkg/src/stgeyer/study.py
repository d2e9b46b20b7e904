"""Monte Carlo comparison of the pseudo-likelihood and logistic fits.

Replicate ``i`` simulates a pattern with stream ``(seed, i, 0)`` and draws the
logistic dummies with stream ``(seed, i, 1)``, so results do not depend on the
order or concurrency in which replicates are run.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import EstimationError
from .fileio import atomic_write_text
from .inference import IrregularParams, fit_logistic_likelihood, fit_pseudo
from .model import GeyerModel
from .simulate import McmcConfig, make_rng, run_chain

__all__ = [
    "StudyConfig",
    "StudyReport",
    "RmseTable",
    "run_replicate",
    "run_study",
    "rmse_table",
    "write_study_outputs",
    "OUTPUT_FILES",
    "FAILURE_LIMIT",
]

logger = logging.getLogger(__name__)

METHODS = ("pseudo", "logistic")
FAILURE_LIMIT = 0.2
OUTPUT_FILES = ("report.json", "estimates.csv", "rmse.csv", "boxplot.csv")


@dataclass(frozen=True)
class StudyConfig:
    """Truth model, replicate count, chain settings, methods and master seed.

    ``mcmc.seed`` is ignored; chains are seeded from ``seed``.
    """

    model: GeyerModel
    n_replicates: int = 100
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    methods: tuple = METHODS
    seed: int = 0
    grid: tuple | None = None
    dummy_per_cell: int = 1
    rho: float | None = None
    name: str = "study"

    def __post_init__(self):
        if int(self.n_replicates) < 1:
            raise ValueError("n_replicates must be at least 1")
        methods = tuple(self.methods)
        if not methods or any(m not in METHODS for m in methods) or len(set(methods)) != len(methods):
            raise ValueError(f"methods must be a nonempty subset of {METHODS}")
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "n_replicates", int(self.n_replicates))


def _param_names(m):
    return ["beta"] + [f"gamma_{j + 1}" for j in range(m)]


def run_replicate(config: StudyConfig, index: int) -> list:
    """Simulate replicate ``index`` and fit it with every configured method.

    Returns one record per method; failures are recorded, never raised.
    """
    model = config.model
    trace = run_chain(model, config.mcmc, make_rng(config.seed, index, 0))
    pattern = trace.final
    irregular = IrregularParams.from_model(model)
    trend_mu = None if model.trend.is_constant else model.trend.with_beta(1.0)
    records = []
    for method in config.methods:
        rec = {"replicate": index, "method": method, "n_points": len(pattern)}
        try:
            if method == "pseudo":
                fit = fit_pseudo(pattern, irregular, trend_mu, config.grid, config.dummy_per_cell)
            else:
                fit = fit_logistic_likelihood(
                    pattern, irregular, trend_mu, config.rho, make_rng(config.seed, index, 1)
                )
        except EstimationError as exc:
            rec.update(converged=False, estimates=None, error=str(exc))
        else:
            rec.update(
                converged=bool(fit.converged),
                estimates=[float(v) for v in fit.estimates()],
                error="" if fit.converged else "; ".join(fit.diagnostics),
            )
        if not rec["converged"]:
            logger.warning("replicate %d (%s) failed: %s", index, method, rec["error"])
        records.append(rec)
    return records


def _replicate_job(args):
    config, index = args
    return run_replicate(config, index)


@dataclass
class StudyReport:
    """Per-replicate estimates and per-method RMSE of a study."""

    name: str
    methods: tuple
    param_names: list
    truth: list
    n_replicates: int
    records: list
    rmse: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    comparable: bool = True

    @classmethod
    def from_records(cls, config: StudyConfig, records: list) -> "StudyReport":
        model = config.model
        records = sorted(records, key=lambda r: (r["replicate"], config.methods.index(r["method"])))
        truth = [model.trend.beta] + [float(g) for g in model.gamma]
        report = cls(
            name=config.name,
            methods=config.methods,
            param_names=_param_names(model.m),
            truth=truth,
            n_replicates=config.n_replicates,
            records=records,
        )
        report.aggregate()
        return report

    def estimates(self, method) -> np.ndarray:
        rows = [r["estimates"] for r in self.records if r["method"] == method and r["converged"]]
        return np.array(rows, dtype=float).reshape(-1, len(self.param_names))

    def aggregate(self) -> None:
        truth = np.asarray(self.truth)
        self.rmse, self.failures = {}, {}
        for method in self.methods:
            est = self.estimates(method)
            self.failures[method] = self.n_replicates - len(est)
            if len(est):
                self.rmse[method] = [float(v) for v in np.sqrt(np.mean((est - truth) ** 2, axis=0))]
            else:
                self.rmse[method] = [float("nan")] * len(truth)
        self.comparable = all(f <= FAILURE_LIMIT * self.n_replicates for f in self.failures.values())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "methods": list(self.methods),
            "param_names": list(self.param_names),
            "truth": [float(v) for v in self.truth],
            "n_replicates": self.n_replicates,
            "rmse": self.rmse,
            "failures": self.failures,
            "comparable": self.comparable,
            "records": self.records,
        }

    @classmethod
    def from_dict(cls, d) -> "StudyReport":
        return cls(
            name=d["name"],
            methods=tuple(d["methods"]),
            param_names=list(d["param_names"]),
            truth=list(d["truth"]),
            n_replicates=int(d["n_replicates"]),
            records=list(d["records"]),
            rmse=dict(d["rmse"]),
            failures=dict(d["failures"]),
            comparable=bool(d["comparable"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True) + "\n"

    @classmethod
    def from_json(cls, text) -> "StudyReport":
        return cls.from_dict(json.loads(text))


def run_study(config: StudyConfig, threads: int = 1) -> StudyReport:
    """Run every replicate (in ``threads`` worker processes when > 1) and
    aggregate.  Individual replicate failures never abort the study."""
    jobs = [(config, i) for i in range(config.n_replicates)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(_replicate_job, jobs))
    else:
        batches = [_replicate_job(job) for job in jobs]
    report = StudyReport.from_records(config, [rec for batch in batches for rec in batch])
    if not report.comparable:
        logger.warning("more than %.0f%% of fits failed; study is not comparable", 100 * FAILURE_LIMIT)
    return report


@dataclass
class RmseTable:
    """RMSE per method (rows) and parameter (columns); ``flags`` marks the
    per-column minimum when more than one method is present."""

    name: str
    methods: list
    param_names: list
    truth: list
    values: np.ndarray
    flags: np.ndarray

    def to_text(self) -> str:
        heads = [f"{p}={t:g}" for p, t in zip(self.param_names, self.truth)]
        width = max(10, *(len(h) for h in heads)) + 2
        lines = [f"RMSE ({self.name})", "method".ljust(10) + "".join(h.rjust(width) for h in heads)]
        for i, method in enumerate(self.methods):
            cells = []
            for j in range(len(self.param_names)):
                cell = f"{self.values[i, j]:.4f}" + ("*" if self.flags[i, j] else " ")
                cells.append(cell.rjust(width))
            lines.append(method.ljust(10) + "".join(cells))
        if self.flags.any():
            lines.append("* lowest RMSE in column")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method"] + self.param_names + [f"{p}_lowest" for p in self.param_names])
        for i, method in enumerate(self.methods):
            w.writerow(
                [method]
                + [repr(float(v)) for v in self.values[i]]
                + [int(f) for f in self.flags[i]]
            )
        return buf.getvalue()


def rmse_table(report: StudyReport) -> RmseTable:
    """Tabulate RMSEs; raises ``ValueError`` for a report without any
    converged replicate in some method."""
    if not report.records:
        raise ValueError("the report holds no replicates")
    methods = list(report.methods)
    values = np.array([report.rmse[m] for m in methods], dtype=float)
    if np.any(np.isnan(values).all(axis=1)):
        raise ValueError("some method has no converged replicate")
    flags = np.zeros_like(values, dtype=bool)
    if len(methods) > 1:
        flags = values == np.nanmin(values, axis=0, keepdims=True)
    return RmseTable(report.name, methods, list(report.param_names), list(report.truth), values, flags)


def _lenient_table(report: StudyReport) -> RmseTable:
    try:
        return rmse_table(report)
    except ValueError:
        values = np.array([report.rmse[m] for m in report.methods], dtype=float)
        return RmseTable(
            report.name, list(report.methods), list(report.param_names), list(report.truth),
            values, np.zeros_like(values, dtype=bool),
        )


def _estimates_csv(report: StudyReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", "method", "n_points", "converged"] + report.param_names + ["error"])
    for r in report.records:
        est = r["estimates"] or [""] * len(report.param_names)
        w.writerow(
            [r["replicate"], r["method"], r["n_points"], int(r["converged"])]
            + [repr(v) if v != "" else "" for v in est]
            + [r["error"]]
        )
    return buf.getvalue()


def _boxplot_csv(report: StudyReport) -> str:
    cols = [(m, j) for m in report.methods for j in range(len(report.param_names))]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate"] + [f"{m}_{report.param_names[j]}" for m, j in cols])
    by_key = {(r["replicate"], r["method"]): r for r in report.records}
    for i in range(report.n_replicates):
        row = [i]
        for m, j in cols:
            rec = by_key.get((i, m))
            ok = rec is not None and rec["converged"]
            row.append(repr(rec["estimates"][j]) if ok else "")
        w.writerow(row)
    return buf.getvalue()


def _boxplot_svg(report: StudyReport) -> str:
    """Plain SVG box plots, one panel per parameter, red line at the truth."""
    colours = {"pseudo": "#4c72b0", "logistic": "#dd8452"}
    panel_w, panel_h, pad = 220, 260, 40
    k = len(report.param_names)
    width = k * panel_w + pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{panel_h + 2 * pad}" '
        'font-family="sans-serif" font-size="11">'
    ]
    data = {m: report.estimates(m) for m in report.methods}
    for j, pname in enumerate(report.param_names):
        x0 = pad + j * panel_w
        vals = [data[m][:, j] for m in report.methods if len(data[m])]
        lo = min([report.truth[j]] + [float(v.min()) for v in vals])
        hi = max([report.truth[j]] + [float(v.max()) for v in vals])
        span = (hi - lo) or 1.0
        lo, hi = lo - 0.05 * span, hi + 0.05 * span

        def ypos(v):
            return pad + panel_h * (1 - (v - lo) / (hi - lo))

        parts.append(
            f'<rect x="{x0}" y="{pad}" width="{panel_w - 20}" height="{panel_h}" '
            'fill="none" stroke="#999"/>'
        )
        parts.append(f'<text x="{x0 + 5}" y="{pad - 8}">{pname}</text>')
        parts.append(f'<text x="{x0 - 35}" y="{ypos(hi) + 10:.1f}">{hi:.3g}</text>')
        parts.append(f'<text x="{x0 - 35}" y="{ypos(lo):.1f}">{lo:.3g}</text>')
        box_w = (panel_w - 20) / (len(report.methods) + 1)
        for i, m in enumerate(report.methods):
            v = data[m][:, j] if len(data[m]) else np.empty(0)
            if not len(v):
                continue
            q1, med, q3 = np.percentile(v, [25, 50, 75])
            iqr = q3 - q1
            wlo = float(v[v >= q1 - 1.5 * iqr].min())
            whi = float(v[v <= q3 + 1.5 * iqr].max())
            cx = x0 + box_w * (i + 1)
            parts.append(
                f'<line x1="{cx:.1f}" x2="{cx:.1f}" y1="{ypos(whi):.1f}" y2="{ypos(wlo):.1f}" stroke="#333"/>'
            )
            parts.append(
                f'<rect x="{cx - box_w / 3:.1f}" y="{ypos(q3):.1f}" width="{2 * box_w / 3:.1f}" '
                f'height="{max(ypos(q1) - ypos(q3), 0.5):.1f}" fill="{colours[m]}" stroke="#333"/>'
            )
            parts.append(
                f'<line x1="{cx - box_w / 3:.1f}" x2="{cx + box_w / 3:.1f}" y1="{ypos(med):.1f}" '
                f'y2="{ypos(med):.1f}" stroke="#000" stroke-width="2"/>'
            )
            parts.append(f'<text x="{cx - box_w / 3:.1f}" y="{pad + panel_h + 14}">{m}</text>')
        yt = ypos(report.truth[j])
        parts.append(
            f'<line x1="{x0}" x2="{x0 + panel_w - 20}" y1="{yt:.1f}" y2="{yt:.1f}" stroke="red"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_study_outputs(report: StudyReport, out_dir, svg: bool = False) -> list:
    """Write ``report.json``, ``estimates.csv``, ``rmse.csv``, ``boxplot.csv``
    (and ``boxplot.svg``) atomically; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "report.json": report.to_json(),
        "estimates.csv": _estimates_csv(report),
        "rmse.csv": _lenient_table(report).to_csv(),
        "boxplot.csv": _boxplot_csv(report),
    }
    if svg:
        files["boxplot.svg"] = _boxplot_svg(report)
    written = []
    for name, text in files.items():
        atomic_write_text(out / name, text)
        written.append(out / name)
    return written


def failure_fraction(report: StudyReport) -> dict:
    return {m: report.failures[m] / report.n_replicates for m in report.methods}


def relative_rmse(report: StudyReport) -> dict:
    """RMSE divided by the true value, per method."""
    truth = np.asarray(report.truth)
    return {m: [float(v) for v in np.asarray(report.rmse[m]) / truth] for m in report.methods}
