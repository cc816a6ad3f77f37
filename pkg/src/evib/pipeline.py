"""Dataset-level orchestration: simulate a grid, extract, fit, regress, report.

Dataset layout::

    <root>/P<participant>/v<speed>/f<force>/freq<hz>/   one trial directory each
"""

import csv
import logging
import os
import re
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import empirical, sysid
from .errors import ConvergenceError, EvibError, FormatError, InsufficientDataError
from .models import EmpiricalSpeedModel, SetupModel
from .plantsim import (PROTOCOL_FORCES, PROTOCOL_FREQS, PROTOCOL_SPEEDS,
                       TrialProtocol, simulate_trial)
from .preprocess import (FrfPointSet, detect_sweeps, estimate_speed, extract_windows,
                         frf_point, reduce_lateral_to_1d)
from .waveio import dump_json, load_json, read_trial, write_trial

log = logging.getLogger("evib")

FITS_COLUMNS = ("participant", "speed_mm_s", "force_n", "K", "f_o_hz", "m", "b", "k",
                "first_converged", "second_converged", "first_residual", "second_residual",
                "n_trials", "speed_est_mm_s")
CORR_COLUMNS = ("pair", "r", "p", "n")
CORR_PAIRS = (("K", "m"), ("f_o_hz", "m"), ("K", "b"), ("f_o_hz", "b"), ("K", "k"),
              ("f_o_hz", "k"))
QUARTILE_COLUMNS = ("parameter", "group_by", "level", "n", "min", "q1", "median", "q3", "max")
BODE_COLUMNS = ("kind", "participant", "speed_mm_s", "force_n", "freq_hz", "magnitude",
                "phase_rad")
TRIAL_RE = re.compile(r"^P([^/]+)/v([^/]+)/f([^/]+)/freq([^/]+)$")


def fmt(x):
    return f"{float(x):g}"


def trial_relpath(participant, speed, force, freq):
    return os.path.join(f"P{participant}", f"v{fmt(speed)}", f"f{fmt(force)}", f"freq{fmt(freq)}")


def trial_seed(seed, *key):
    """Independent, reproducible seed for one grid cell."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class GridSpec:
    speeds: tuple = PROTOCOL_SPEEDS
    forces: tuple = PROTOCOL_FORCES
    freqs: tuple = tuple(float(f) for f in PROTOCOL_FREQS)
    participants: tuple = ("1",)

    def __post_init__(self):
        if not (self.speeds and self.forces and self.freqs and self.participants):
            raise ValueError("grid must be non-empty")
        for name in ("speeds", "forces", "freqs"):
            setattr(self, name, tuple(float(v) for v in getattr(self, name)))
        self.participants = tuple(str(p) for p in self.participants)

    def cells(self):
        for pi, p in enumerate(self.participants):
            for vi, v in enumerate(self.speeds):
                for fi, f in enumerate(self.forces):
                    for qi, q in enumerate(self.freqs):
                        yield (pi, vi, fi, qi), (str(p), float(v), float(f), float(q))


def _simulate_one(args):
    root, cfg, key, cell, seed = args
    p, v, f, q = cell
    proto = TrialProtocol(q, v, f, participant=p)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rec = simulate_trial(cfg, proto, trial_seed(seed, *key))
    path = os.path.join(root, trial_relpath(p, v, f, q))
    write_trial(rec, path)
    return path


def _map(fn, items, jobs):
    items = list(items)
    if jobs and jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))
    return [fn(i) for i in items]


def simulate_grid(root, cfg, grid=None, seed=0, jobs=1):
    """Write every trial of ``grid`` under ``root``; returns the trial paths."""
    grid = grid or GridSpec()
    tasks = [(root, cfg, key, cell, seed) for key, cell in grid.cells()]
    paths = _map(_simulate_one, tasks, jobs)
    dump_json({"format_version": 1, "seed": int(seed), "plant": cfg.to_dict(),
               "grid": {"speeds": list(grid.speeds), "forces": list(grid.forces),
                        "freqs": list(grid.freqs), "participants": list(grid.participants)}},
              os.path.join(root, "dataset.json"))
    return paths


def find_trials(root):
    out = []
    for dirpath, _, files in os.walk(root):
        if "meta.json" in files:
            rel = os.path.relpath(dirpath, root).replace(os.sep, "/")
            if TRIAL_RE.match(rel):
                out.append(dirpath)
    return sorted(out)


@dataclass
class TrialResult:
    path: str
    friction: FrfPointSet
    skin: FrfPointSet
    speed_est: float
    n_sweeps: int
    truth: dict = field(default_factory=dict)


def process_trial(trial):
    """Friction and skin response points for every sweep of one trial."""
    freq = float(trial.meta["protocol"]["message_freq"])
    carrier = float(trial.meta["protocol"].get("carrier", 7000.0))
    f1 = reduce_lateral_to_1d(trial.force_x, trial.force_y)
    segs = detect_sweeps(f1, (trial.position_t, trial.position_mm))
    wins = extract_windows(trial, segs)
    if not wins:
        raise InsufficientDataError("no usable sweep windows")
    fr = FrfPointSet.concat(frf_point(w, freq, carrier) for w in wins)
    sk = FrfPointSet.concat(frf_point(w, freq, carrier, kind="skin") for w in wins)
    try:
        v = estimate_speed(trial.position_t, trial.position_mm)
    except InsufficientDataError:
        v = float("nan")
    return fr, sk, v, len(segs)


def _process_path(path):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rec = read_trial(path)
            fr, sk, v, ns = process_trial(rec)
        return TrialResult(path, fr, sk, v, ns, rec.meta.get("truth", {})), None
    except (EvibError, ValueError, OSError, KeyError) as exc:
        return None, f"{path}: {type(exc).__name__}: {exc}"


def extract_dataset(root, jobs=1):
    """Process every trial; returns (results, failures)."""
    paths = find_trials(root)
    if not paths:
        raise InsufficientDataError(f"no trials under {root}")
    out = _map(_process_path, paths, jobs)
    results = [r for r, _ in out if r is not None]
    failures = [e for _, e in out if e is not None]
    for e in failures:
        log.warning("skipped trial %s", e)
    return results, failures


def fit_cell(friction, skin, setup, band_max=sysid.DEFAULT_BAND):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        first = sysid.fit_first_order(sysid.remove_setup(friction, setup, "output"), band_max)
        second = sysid.fit_second_order(sysid.remove_setup(skin, setup, "input"), band_max)
    return first, second


def _fit_task(args):
    key, fr, sk, setup, n, v_est = args
    try:
        first, second = fit_cell(fr, sk, setup)
    except EvibError as exc:
        return key, None, f"{key}: {exc}"
    return key, (first, second, n, v_est), None


def fit_cells(results, setup, jobs=1):
    """Group trial results by (participant, speed, force) and fit both models."""
    groups = {}
    for r in results:
        p = str(r.friction.participant[0])
        key = (p, float(r.friction.speed[0]), float(r.friction.force[0]))
        groups.setdefault(key, []).append(r)
    tasks = []
    for key in sorted(groups):
        rs = groups[key]
        fr = FrfPointSet.concat(r.friction for r in rs).sorted()
        sk = FrfPointSet.concat(r.skin for r in rs).sorted()
        tasks.append((key, fr, sk, setup, len(rs), float(np.nanmedian([r.speed_est for r in rs]))))
    rows, failures = [], []
    for key, res, err in _map(_fit_task, tasks, jobs):
        if err:
            failures.append(err)
            log.warning("fit failed %s", err)
            continue
        first, second, n, v_est = res
        rows.append({"participant": key[0], "speed_mm_s": key[1], "force_n": key[2],
                     "K": first.params.K, "f_o_hz": first.params.f_o,
                     "m": second.params.m, "b": second.params.b, "k": second.params.k,
                     "first_converged": int(first.converged),
                     "second_converged": int(second.converged),
                     "first_residual": first.residual, "second_residual": second.residual,
                     "n_trials": n, "speed_est_mm_s": v_est})
    return rows, failures


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r[c]) for c in columns])


def read_fits(path):
    try:
        with open(path, newline="") as fh:
            rd = csv.DictReader(fh)
            if tuple(rd.fieldnames or ()) != FITS_COLUMNS:
                raise FormatError(f"{path}: header must be {','.join(FITS_COLUMNS)}")
            rows = []
            for r in rd:
                row = {c: float(r[c]) for c in FITS_COLUMNS if c != "participant"}
                row["participant"] = r["participant"]
                rows.append(row)
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return rows


def regress(rows, converged_only=True):
    use = [r for r in rows if r["first_converged"] or not converged_only]
    K = [empirical.ParameterSample(r["speed_mm_s"], r["force_n"], r["participant"], r["K"], "K")
         for r in use]
    W = [empirical.ParameterSample(r["speed_mm_s"], r["force_n"], r["participant"],
                                   r["f_o_hz"], "f_o") for r in use]
    model = empirical.build_empirical_model(K, W)
    fit = empirical.ols_fit(W)
    return model, fit


def correlate(rows):
    out = []
    for a, b in CORR_PAIRS:
        res = empirical.pearson([r[a] for r in rows], [r[b] for r in rows])
        name = f"{'omega_o' if a == 'f_o_hz' else a}-{b}"
        out.append({"pair": name, "r": res["r"], "p": res["p"], "n": res["n"]})
    return out


def quartile_rows(rows, params=("K", "f_o_hz", "m", "b", "k")):
    out = []
    for p in params:
        for by in ("speed_mm_s", "force_n"):
            for level in sorted({r[by] for r in rows}):
                vals = np.array([r[p] for r in rows if r[by] == level])
                q = np.percentile(vals, [0, 25, 50, 75, 100])
                out.append({"parameter": p, "group_by": by, "level": float(level),
                            "n": int(vals.size), "min": float(q[0]), "q1": float(q[1]),
                            "median": float(q[2]), "q3": float(q[3]), "max": float(q[4])})
    return out


def bode_rows(results, setup):
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for kind, attr, pos in (("friction", "friction", "output"), ("skin", "skin", "input")):
            pts = FrfPointSet.concat(
                sysid.remove_setup(getattr(r, attr), setup, pos) for r in results).sorted()
            _, mag, _ = sysid.unwrap_phase(pts.freq, pts.response)
            for i in range(len(pts)):
                out.append({"kind": kind, "participant": str(pts.participant[i]),
                            "speed_mm_s": float(pts.speed[i]), "force_n": float(pts.force[i]),
                            "freq_hz": float(pts.freq[i]), "magnitude": float(abs(pts.response[i])),
                            "phase_rad": float(np.angle(pts.response[i]))})
    return out


def bode_svg(rows, kind, width=480, height=320):
    """Minimal self-contained log-log scatter of response magnitude."""
    pts = [(r["freq_hz"], r["magnitude"]) for r in rows if r["kind"] == kind and r["magnitude"] > 0]
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n')
    if not pts:
        return head + "</svg>\n"
    lf = np.log10([p[0] for p in pts])
    lm = np.log10([p[1] for p in pts])
    pad = 40

    def sx(v):
        span = (lf.max() - lf.min()) or 1.0
        return pad + (v - lf.min()) / span * (width - 2 * pad)

    def sy(v):
        span = (lm.max() - lm.min()) or 1.0
        return height - pad - (v - lm.min()) / span * (height - 2 * pad)

    body = [f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
            'fill="none" stroke="black"/>',
            f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" font-size="12">'
            'frequency (Hz, log)</text>',
            f'<text x="12" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 12 '
            f'{height / 2:.0f})" text-anchor="middle">|H| ({kind}, log)</text>']
    for a, b in zip(lf, lm):
        body.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="1.5" fill="steelblue"/>')
    return head + "\n".join(body) + "\n</svg>\n"


def write_plotdata(outdir, results, rows, setup):
    pd = os.path.join(outdir, "plotdata")
    os.makedirs(pd, exist_ok=True)
    bode = bode_rows(results, setup)
    write_rows(os.path.join(pd, "bode_points.csv"), BODE_COLUMNS, bode)
    for kind in ("friction", "skin"):
        with open(os.path.join(pd, f"bode_{kind}.svg"), "w") as fh:
            fh.write(bode_svg(bode, kind))
    write_rows(os.path.join(pd, "quartiles.csv"), QUARTILE_COLUMNS, quartile_rows(rows))


def _simulate_process(args):
    cfg, key, cell, seed = args
    p, v, f, q = cell
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rec = simulate_trial(cfg, TrialProtocol(q, v, f, participant=p), trial_seed(seed, *key))
        fr, sk, vest, ns = process_trial(rec)
    return TrialResult(trial_relpath(p, v, f, q), fr, sk, vest, ns, rec.meta["truth"])


def simulate_results(cfg, grid=None, seed=0, jobs=1):
    """Simulate and process a grid in memory (same seeds as :func:`simulate_grid`)."""
    grid = grid or GridSpec()
    return _map(_simulate_process, [(cfg, k, c, seed) for k, c in grid.cells()], jobs)


def analyze(results, outdir, setup=None, failures=(), truth=None, jobs=1, max_fail=0.10):
    """Fit cells, regress, correlate and write every output product."""
    setup = setup or SetupModel.load()
    failures = list(failures)
    n_total = len(results) + len(failures)
    if n_total == 0:
        raise InsufficientDataError("no trials")
    if len(failures) > max_fail * n_total:
        raise InsufficientDataError(f"{len(failures)} of {n_total} trials failed")
    rows, fit_fail = fit_cells(results, setup, jobs)
    if not rows:
        raise InsufficientDataError("no cell could be fitted")
    model, fit = regress(rows)
    os.makedirs(outdir, exist_ok=True)
    write_rows(os.path.join(outdir, "fits.csv"), FITS_COLUMNS, rows)
    dump_json(model.to_dict(), os.path.join(outdir, "empirical_model.json"))
    try:
        corr = correlate(rows)
    except EvibError as exc:
        log.warning("correlations skipped: %s", exc)
        corr = []
    write_rows(os.path.join(outdir, "correlations.csv"), CORR_COLUMNS, corr)
    write_plotdata(outdir, results, rows, setup)
    summary = {"trials": n_total, "failed_trials": failures, "failed_fits": fit_fail,
               "cells": len(rows), "truth_plant": truth or {},
               "regression": {"intercept": fit.intercept, "coef_force": fit.coef_force,
                              "coef_speed": fit.coef_speed,
                              "coef_interaction": fit.coef_interaction,
                              "stderr": list(fit.stderr), "r2": fit.r2, "n": fit.n}}
    dump_json(summary, os.path.join(outdir, "summary.json"))
    n_bad = sum(1 for r in rows if not r["first_converged"])
    if n_bad > max_fail * len(rows):
        raise ConvergenceError(f"{n_bad} of {len(rows)} first-order fits did not converge")
    return rows, model


def run_pipeline(root, outdir, setup=None, jobs=1, max_fail=0.10):
    """Full dataset to fits, empirical model, correlations and plot data.

    Raises
    ------
    InsufficientDataError
        No trials, or more than ``max_fail`` of them failed.
    ConvergenceError
        More than ``max_fail`` of the cell fits did not converge.
    """
    results, failures = extract_dataset(root, jobs)
    ds = os.path.join(root, "dataset.json")
    truth = load_json(ds)["plant"] if os.path.exists(ds) else {}
    return analyze(results, outdir, setup, failures, truth, jobs, max_fail)


REPORT_ARTIFACTS = ("fits.csv", "empirical_model.json", "correlations.csv", "summary.json",
                    "plotdata/quartiles.csv", "plotdata/bode_points.csv")
REPORT_COLUMNS = ("quantity", "recovered", "truth", "delta", "delta_pct")


def report(outdir):
    """Recovered versus configured parameters.

    Returns (rows, missing): rows follow ``REPORT_COLUMNS``; ``missing``
    lists absent artifacts.
    """
    missing = [a for a in REPORT_ARTIFACTS if not os.path.exists(os.path.join(outdir, a))]
    rows = []
    mpath = os.path.join(outdir, "empirical_model.json")
    if os.path.exists(mpath):
        model = EmpiricalSpeedModel.from_dict(load_json(mpath))
        truth = {}
        spath = os.path.join(outdir, "summary.json")
        if os.path.exists(spath):
            fr = load_json(spath).get("truth_plant", {}).get("friction", {})
            if fr.get("kind") == "empirical":
                truth = {"K_bar": fr["K_bar"], "intercept_hz": fr["intercept_hz"],
                         "slope_hz_per_mm_s": fr["slope_hz_per_mm_s"]}
        for name, val in (("K_bar", model.K_bar), ("intercept_hz", model.intercept),
                          ("slope_hz_per_mm_s", model.slope)):
            t = truth.get(name, float("nan"))
            d = val - t
            rows.append({"quantity": name, "recovered": float(val), "truth": float(t),
                         "delta": float(d), "delta_pct": float(100.0 * d / t) if t else float("nan")})
    return rows, missing


def format_report(rows, missing):
    lines = ["evib pipeline report", ""]
    for r in rows:
        lines.append(f"{r['quantity']:>20}: {r['recovered']:.6g}  (truth {r['truth']:.6g}, "
                     f"delta {r['delta']:+.4g}, {r['delta_pct']:+.2f}%)")
    if missing:
        lines.append("")
        lines.append("missing artifacts: " + ", ".join(missing))
    return "\n".join(lines) + "\n"
