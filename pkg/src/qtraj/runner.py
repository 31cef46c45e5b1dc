"""
Experiment pipeline: sample, integrate, histogram, compare and write files.

Every data file starts with ``#``-prefixed provenance lines carrying the
resolved configuration hash; no timestamps are written, so identical
configurations reproduce byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import make_interp_spline

from . import __version__
from .config import ExperimentConfig, _plain, resolve
from .dynamics import crossing_count, run_ensemble
from .errors import ConfigError, NoFringes
from .statistics import (
    central_density,
    compare_to_analytic,
    fringe_visibility,
    histogram_from_bins,
    sample_initial_conditions,
)
from .velocity_field import reduced_density

log = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("tau_c", "eta", "n_trajectories")

# Relative prominence used to read fringes off noisy histograms.
HISTOGRAM_PROMINENCE = 0.05


@dataclass
class RunResult:
    config: ExperimentConfig
    report: dict
    files: dict
    gates: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.gates.values())


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_csv(path: Path, header_lines, columns, rows):
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def _provenance(cfg: ExperimentConfig, kind: str):
    return [f"qtraj {__version__} {kind}", f"config_sha256={cfg.digest()}", f"preset={cfg.name}"]


def _saved_indices(n: int, k: int):
    if k <= 0:
        return []
    return sorted(set(np.linspace(0, n - 1, min(k, n)).round().astype(int).tolist()))


def _gate_checks(cfg: ExperimentConfig, summary: dict) -> dict:
    gates = {"aborted_fraction": summary["aborted_fraction"] < cfg.check.max_abort_fraction}
    if not cfg.screening:
        gates["l1_error"] = summary["comparison"]["l1_error"] < cfg.check.l1_max
        if cfg.symmetric:
            gates["no_axis_crossing"] = summary["crossing_fraction"] == 0.0
    return gates


def simulate(cfg: ExperimentConfig):
    """Run the ensemble and compute statistics; no files are written."""
    p1, p2 = cfg.packets()
    ics = sample_initial_conditions(p1, p2, cfg.c1, cfg.c2, cfg.n_trajectories, cfg.seed)
    keep = _saved_indices(len(ics), cfg.output.saved_trajectories)
    trajectories = run_ensemble(
        cfg.field_context(),
        ics,
        cfg.integrator_settings(),
        keep_samples=keep,
        threads=cfg.threads,
        max_abort_fraction=cfg.check.max_abort_fraction,
    )
    hist = histogram_from_bins(trajectories, cfg.histogram.bins, cfg.histogram_range())
    n_cross, frac = crossing_count(trajectories)
    n_aborted = sum(tr.aborted for tr in trajectories)
    summary = {
        "n_trajectories": len(trajectories),
        "n_aborted": n_aborted,
        "aborted_fraction": n_aborted / len(trajectories),
        "n_crossing": n_cross,
        "crossing_fraction": frac,
        "histogram": {
            "bins": int(hist.counts.size),
            "bin_width": float(hist.bin_widths[0]),
            "range": [float(hist.bin_edges[0]), float(hist.bin_edges[-1])],
            "n_in_range": hist.n_total,
            "n_underflow": hist.n_underflow,
            "n_overflow": hist.n_overflow,
            "central_density": central_density(hist, 0.0) if hist.bin_edges[0] < 0 < hist.bin_edges[-1] else None,
        },
    }
    if not cfg.screening:
        summary["comparison"] = compare_to_analytic(
            hist, cfg.field_context(), cfg.flight_time, min_prominence=HISTOGRAM_PROMINENCE
        ).as_dict()
    else:
        try:
            vis = fringe_visibility(hist, min_prominence=HISTOGRAM_PROMINENCE)
            fringes = True
        except NoFringes:
            vis, fringes = 0.0, False
        # Screened runs have no analytic target; only the measured pattern is reported.
        summary["comparison"] = {
            "l1_error": None,
            "linf_error": None,
            "visibility_measured": vis,
            "visibility_analytic": None,
            "fringes_measured": fringes,
            "fringes_analytic": None,
        }
    return trajectories, hist, summary


def run_experiment(cfg: ExperimentConfig, out_dir) -> RunResult:
    """Simulate ``cfg`` and write its files into ``out_dir``.

    Files: ``trajectories.csv`` (trajectory_id, slit, t, x),
    ``intensity.csv`` (bin_center, density), ``analytic.csv`` (x, density;
    unscreened runs only), optional ``intensity_smooth.csv`` and
    ``report.json``. Nothing is left behind if the run fails.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".partial-", dir=out_dir))
    try:
        trajectories, hist, summary = simulate(cfg)
        files = _write_outputs(cfg, staging, trajectories, hist, summary)
        gates = _gate_checks(cfg, summary)
        report = {
            "config": cfg.to_dict(derived=True),
            "config_sha256": cfg.digest(),
            "results": summary,
            "gates": gates,
        }
        (staging / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        files["report"] = "report.json"
        final = {}
        for key, name in files.items():
            target = out_dir / name
            shutil.move(str(staging / name), target)
            final[key] = target
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return RunResult(cfg, report, final, gates)


def _write_outputs(cfg, directory: Path, trajectories, hist, summary) -> dict:
    files = {}
    rows = []
    for i in _saved_indices(len(trajectories), cfg.output.saved_trajectories):
        tr = trajectories[i]
        for t, x in zip(tr.t, tr.x):
            rows.append((i, int(tr.slit), _fmt(t), _fmt(x)))
    _write_csv(
        directory / "trajectories.csv",
        _provenance(cfg, "trajectories") + [f"longitudinal_velocity={_fmt(cfg.longitudinal_velocity)}"],
        ["trajectory_id", "slit", "t", "x"],
        rows,
    )
    files["trajectories"] = "trajectories.csv"

    _write_csv(
        directory / "intensity.csv",
        _provenance(cfg, "intensity")
        + [f"n_in_range={hist.n_total} n_underflow={hist.n_underflow} n_overflow={hist.n_overflow}"],
        ["bin_center", "density"],
        [(_fmt(c), _fmt(d)) for c, d in zip(hist.bin_centers, hist.density)],
    )
    files["intensity"] = "intensity.csv"

    if cfg.histogram.smooth:
        # Presentation only; never used in error metrics.
        spline = make_interp_spline(hist.bin_centers, hist.density, k=3)
        xs = np.linspace(hist.bin_centers[0], hist.bin_centers[-1], 4 * hist.bin_centers.size)
        _write_csv(
            directory / "intensity_smooth.csv",
            _provenance(cfg, "intensity B-spline (display only)"),
            ["x", "density"],
            [(_fmt(x), _fmt(y)) for x, y in zip(xs, spline(xs))],
        )
        files["intensity_smooth"] = "intensity_smooth.csv"

    if not cfg.screening:
        lo, hi = cfg.histogram_range()
        xs = np.linspace(lo, hi, cfg.output.analytic_points)
        rho = reduced_density(cfg.field_context(), xs, np.full(xs.shape, cfg.flight_time))
        _write_csv(
            directory / "analytic.csv",
            _provenance(cfg, f"analytic reduced density at t={_fmt(cfg.flight_time)}"),
            ["x", "density"],
            [(_fmt(x), _fmt(y)) for x, y in zip(xs, rho)],
        )
        files["analytic"] = "analytic.csv"
    return files


# Sweeps ------------------------------------------------------------------


def parse_sweep(text: str) -> tuple[str, list[str]]:
    if "=" not in text:
        raise ConfigError(f"--sweep: expected key=v1,v2,..., got {text!r}")
    key, values = text.split("=", 1)
    key = key.strip()
    if key not in SWEEP_PARAMETERS:
        raise ConfigError(f"--sweep: parameter must be one of {', '.join(SWEEP_PARAMETERS)}, got {key!r}")
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not items:
        raise ConfigError("--sweep: no values given")
    return key, items


def config_with(cfg: ExperimentConfig, parameter: str, value) -> ExperimentConfig:
    """Copy of ``cfg`` with one sweep parameter replaced (validated)."""
    values = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            for k, sub in dataclasses.asdict(v).items():
                values[f"{f.name}.{k}"] = sub
        else:
            values[f.name] = v
    if parameter == "eta":
        values.pop("tau_s", None)
    values[parameter] = value
    return resolve(values)


def sweep(cfg: ExperimentConfig, parameter: str, values, out_dir):
    """One run per value, all with the same seed, plus ``sweep_summary.csv``.

    Failed runs are recorded in the summary and the sweep continues. Returns
    ``(rows, sweep_gates, results)``.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {', '.join(SWEEP_PARAMETERS)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    configs = [config_with(cfg, parameter, v) for v in values]
    rows, results = [], []
    for raw, run_cfg in zip(values, configs):
        label = f"{parameter}={raw}"
        row = {
            "parameter": parameter,
            "value": str(raw),
            "tau_c": _plain(run_cfg.tau_c),
            "tau_s": _plain(run_cfg.screening_time),
            "eta": _plain(run_cfg.eta_value),
            "n_trajectories": run_cfg.n_trajectories,
        }
        try:
            res = run_experiment(run_cfg, out_dir / label)
        except Exception as exc:  # recorded, sweep continues
            log.error("sweep run %s failed: %s", label, exc)
            row.update(status=f"failed: {type(exc).__name__}: {exc}")
            results.append(None)
        else:
            r = res.report["results"]
            row.update(
                visibility_measured=r["comparison"]["visibility_measured"],
                visibility_analytic=r["comparison"]["visibility_analytic"],
                l1_error=r["comparison"]["l1_error"],
                crossing_fraction=r["crossing_fraction"],
                n_crossing=r["n_crossing"],
                n_aborted=r["n_aborted"],
                central_density=r["histogram"]["central_density"],
                status="ok" if res.passed else "gate-failed",
            )
            results.append(res)
        rows.append(row)

    gates = _sweep_gates(parameter, configs, rows)
    columns = [
        "parameter", "value", "tau_c", "tau_s", "eta", "n_trajectories", "visibility_measured",
        "visibility_analytic", "l1_error", "crossing_fraction", "n_crossing", "n_aborted", "central_density", "status",
    ]
    _write_csv(
        out_dir / "sweep_summary.csv",
        _provenance(cfg, f"sweep over {parameter}") + [f"gates={json.dumps(gates, sort_keys=True)}"],
        columns,
        [[_cell(row.get(c)) for c in columns] for row in rows],
    )
    return rows, gates, results


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return _fmt(value)
    return value


def _sweep_gates(parameter, configs, rows) -> dict:
    ok = [r.get("status") in ("ok", "gate-failed") for r in rows]
    if not all(ok):
        return {"all_runs_completed": False}
    gates = {"all_runs_completed": True}
    if parameter == "eta":
        order = sorted(range(len(rows)), key=lambda i: -configs[i].eta_value)
        fracs = [rows[i]["crossing_fraction"] for i in order]
        gates["crossing_non_decreasing_as_eta_decreases"] = all(b >= a for a, b in zip(fracs, fracs[1:]))
        unscreened = [rows[i]["crossing_fraction"] for i in order if math.isinf(configs[i].eta_value)]
        if unscreened:
            gates["no_crossing_without_screening"] = all(f == 0.0 for f in unscreened)
    elif parameter == "tau_c":
        order = sorted(range(len(rows)), key=lambda i: -configs[i].tau_c)
        vis = [rows[i]["visibility_measured"] for i in order]
        gates["visibility_decreasing_with_tau_c"] = all(b < a for a, b in zip(vis, vis[1:]))
    return gates
