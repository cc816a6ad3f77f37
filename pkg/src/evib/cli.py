"""Command-line entry point ``evib``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 convergence failure.
"""

import argparse
import json
import logging
import os
import sys
import warnings

from . import __version__, pipeline, render, sysid
from .errors import ConvergenceError, EvibError, FormatError
from .models import EmpiricalSpeedModel, SetupModel
from .plantsim import PlantConfig
from .preprocess import FrfPointSet
from .waveio import dump_json, load_json, read_trial, read_waveform, write_waveform_bin

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 2, 3, 4
CONFIG_VERSION = 1
CONFIG_KEYS = {"version", "dataset", "output", "seed", "grid", "plant", "setup"}
GRID_KEYS = {"speeds", "forces", "freqs", "participants"}

log = logging.getLogger("evib")


class UsageError(Exception):
    pass


def load_config(path):
    """Strict JSON pipeline config: a ``version`` field and no unknown keys."""
    cfg = load_json(path)
    if not isinstance(cfg, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise FormatError(f"{path}: unknown config fields {sorted(unknown)}")
    if cfg.get("version") != CONFIG_VERSION:
        raise FormatError(f"{path}: config version must be {CONFIG_VERSION}")
    grid = cfg.get("grid", {})
    if set(grid) - GRID_KEYS:
        raise FormatError(f"{path}: unknown grid fields {sorted(set(grid) - GRID_KEYS)}")
    base = os.path.dirname(os.path.abspath(path))
    for key in ("dataset", "output", "setup"):
        if cfg.get(key) is not None:
            cfg[key] = os.path.join(base, cfg[key])
    if cfg.get("setup") and not os.path.exists(cfg["setup"]):
        raise FormatError(f"{path}: setup file {cfg['setup']} not found")
    return cfg


def resolve_seed(cli_seed, config_seed=None):
    """``--seed`` beats ``EVIB_SEED``, which beats the config file."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get("EVIB_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"EVIB_SEED must be an integer, got {env!r}") from exc
    return 0 if config_seed is None else int(config_seed)


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text}") from exc


def _setup(path):
    return SetupModel.load(path)


def cmd_simulate(args):
    cfg = load_config(args.config) if args.config else {}
    grid_d = dict(cfg.get("grid", {}))
    for key in ("speeds", "forces", "freqs"):
        if getattr(args, key) is not None:
            grid_d[key] = getattr(args, key)
    if args.participants is not None:
        grid_d["participants"] = tuple(args.participants.split(","))
    if not args.grid and not grid_d:
        raise UsageError("give --grid for the full protocol grid or --speeds/--forces/--freqs")
    grid = pipeline.GridSpec(**{k: tuple(v) for k, v in grid_d.items()})
    plant = PlantConfig.from_dict(cfg["plant"]) if "plant" in cfg else PlantConfig()
    if args.mode:
        plant = PlantConfig.from_dict({**plant.to_dict(), "mode": args.mode})
    if args.noise_free:
        plant = plant.noiseless()
    elif args.snr_db is not None:
        plant = PlantConfig.from_dict({**plant.to_dict(), "snr_db": args.snr_db,
                                       "noise_rms": None})
    out = args.out or cfg.get("dataset")
    if not out:
        raise UsageError("--out is required")
    seed = resolve_seed(args.seed, cfg.get("seed"))
    paths = pipeline.simulate_grid(out, plant, grid, seed=seed, jobs=args.jobs)
    print(f"wrote {len(paths)} trials to {out}")
    return EXIT_OK


def cmd_extract(args):
    rec = read_trial(args.trial)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fr, sk, v, ns = pipeline.process_trial(rec)
    out = args.out or os.path.join(args.trial, "frf_points.csv")
    fr.write_csv(out)
    sk.write_csv(os.path.join(os.path.dirname(os.path.abspath(out)), "skin_points.csv"))
    print(f"{ns} sweeps, {len(fr)} points, speed {v:.2f} mm/s -> {out}")
    return EXIT_OK


def cmd_identify(args):
    pts = FrfPointSet.read_csv(args.points)
    if not args.no_setup:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pos = "output" if args.model == "first" else "input"
            pts = sysid.remove_setup(pts, _setup(args.setup), pos)
    fit = {"first": sysid.fit_first_order, "second": sysid.fit_second_order}[args.model]
    res = fit(pts, band_max=args.band)
    dump_json(res.to_dict(), args.out)
    print(json.dumps(res.to_dict()["params"]))
    if not res.converged:
        log.error("fit did not converge: %s", ", ".join(res.flags) or "residual above tolerance")
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_regress(args):
    rows = pipeline.read_fits(args.fits)
    model, fit = pipeline.regress(rows, converged_only=not args.all)
    dump_json(model.to_dict(), args.out)
    print(f"K_bar={model.K_bar:.6g} intercept={model.intercept:.6g} Hz "
          f"slope={model.slope:.6g} Hz/(mm/s)")
    return EXIT_OK


def cmd_correlate(args):
    rows = pipeline.read_fits(args.fits)
    pipeline.write_rows(args.out, pipeline.CORR_COLUMNS, pipeline.correlate(rows))
    return EXIT_OK


def _render_cfg(args):
    return render.RenderConfig(carrier=args.carrier, ceiling_db=args.ceiling_db)


def cmd_compensate(args):
    target = read_waveform(args.target)
    model = EmpiricalSpeedModel.from_dict(load_json(args.model))
    rcfg = _render_cfg(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        message, info = render.inverse_filter(target, args.speed, model, rcfg, return_info=True)
    drive = render.render_voltage(message, rcfg)
    os.makedirs(args.out, exist_ok=True)
    write_waveform_bin(drive.voltage, os.path.join(args.out, "drive_voltage"))
    dump_json({"speed_mm_s": args.speed, "cutoff_hz": info["cutoff_hz"],
               "ceiling_fraction": info["ceiling_fraction"],
               "saturation_fraction": drive.saturation,
               "warnings": sorted({str(w.message) for w in caught})},
              os.path.join(args.out, "render_report.json"))
    return EXIT_OK


def cmd_verify_render(args):
    target = read_waveform(args.target)
    model = EmpiricalSpeedModel.from_dict(load_json(args.model))
    plant = PlantConfig(friction=model, snr_db=None, setup=_setup(args.setup))
    rep = render.verify_render(target, args.speed, _render_cfg(args), plant, model=model,
                               design_speed=args.design_speed, force=args.force)
    os.makedirs(args.out, exist_ok=True)
    dump_json(rep.to_dict(), os.path.join(args.out, "match_report.json"))
    pipeline.write_rows(os.path.join(args.out, "third_octave_errors.csv"),
                        ("center_hz", "error_db"),
                        [{"center_hz": float(c), "error_db": float(e)}
                         for c, e in zip(rep.band_centers, rep.band_error_db)])
    print(f"worst-case error {rep.worst_db:.3f} dB, saturation {rep.saturation:.3f}")
    return EXIT_OK


def cmd_pipeline(args):
    cfg = load_config(args.config) if args.config else {}
    dataset = args.dataset or cfg.get("dataset")
    out = args.out or cfg.get("output")
    if not dataset or not out:
        raise UsageError("dataset and --out are required")
    setup = _setup(args.setup or cfg.get("setup"))
    rows, model = pipeline.run_pipeline(dataset, out, setup, jobs=args.jobs)
    print(f"{len(rows)} cells; K_bar={model.K_bar:.6g} intercept={model.intercept:.6g} Hz "
          f"slope={model.slope:.6g} Hz/(mm/s)")
    return EXIT_OK


def cmd_report(args):
    rows, missing = pipeline.report(args.outputs)
    if not rows and missing:
        sys.stderr.write("missing artifacts: " + ", ".join(missing) + "\n")
        return EXIT_DATA
    if args.format == "csv":
        sys.stdout.write(",".join(pipeline.REPORT_COLUMNS) + "\n")
        for r in rows:
            sys.stdout.write(",".join(pipeline._cell(r[c]) for c in pipeline.REPORT_COLUMNS) + "\n")
    else:
        sys.stdout.write(pipeline.format_report(rows, missing))
    return EXIT_OK if not missing else EXIT_DATA


def build_parser():
    p = argparse.ArgumentParser(prog="evib", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a synthetic trial grid")
    s.add_argument("--out", help="dataset root")
    s.add_argument("--config", help="pipeline config JSON")
    s.add_argument("--grid", action="store_true", help="full 15 x 5 x 5 protocol grid")
    s.add_argument("--speeds", type=_floats)
    s.add_argument("--forces", type=_floats)
    s.add_argument("--freqs", type=_floats)
    s.add_argument("--participants")
    s.add_argument("--seed", type=int)
    s.add_argument("--snr-db", type=float)
    s.add_argument("--noise-free", action="store_true")
    s.add_argument("--mode", choices=("linear", "physical"))
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("extract", help="frequency-response points of one trial")
    s.add_argument("trial")
    s.add_argument("--out")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("identify", help="fit a model to frf_points.csv")
    s.add_argument("points")
    s.add_argument("--model", choices=("first", "second"), default="first")
    s.add_argument("--setup", help="setup JSON (default: shipped baseline)")
    s.add_argument("--no-setup", action="store_true", help="points are already rig-free")
    s.add_argument("--band", type=float, default=sysid.DEFAULT_BAND)
    s.add_argument("--out", default="fit.json")
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("regress", help="empirical speed model from fits.csv")
    s.add_argument("fits")
    s.add_argument("--out", default="empirical_model.json")
    s.add_argument("--all", action="store_true", help="include non-converged cells")
    s.set_defaults(func=cmd_regress)

    s = sub.add_parser("correlate", help="parameter correlations from fits.csv")
    s.add_argument("fits")
    s.add_argument("--out", default="correlations.csv")
    s.set_defaults(func=cmd_correlate)

    for name, func, hlp in (("compensate", cmd_compensate, "drive voltage for a target"),
                            ("verify-render", cmd_verify_render, "closed-loop render check")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--target", required=True, help="target friction waveform (N)")
        s.add_argument("--speed", type=float, required=True)
        s.add_argument("--model", required=True, help="empirical_model.json")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--carrier", type=float, default=render.CARRIER)
        s.add_argument("--ceiling-db", type=float, default=20.0)
        if name == "verify-render":
            s.add_argument("--design-speed", type=float)
            s.add_argument("--force", type=float, default=0.4)
            s.add_argument("--setup")
        s.set_defaults(func=func)

    s = sub.add_parser("pipeline", help="dataset to fits, model and plot data")
    s.add_argument("dataset", nargs="?")
    s.add_argument("--out")
    s.add_argument("--config")
    s.add_argument("--setup")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("report", help="summarize pipeline outputs")
    s.add_argument("outputs")
    s.add_argument("--format", choices=("text", "csv"), default="text")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"evib: error: {exc}\n")
        return EXIT_USAGE
    except ConvergenceError as exc:
        sys.stderr.write(f"evib: convergence failure: {exc}\n")
        return EXIT_CONVERGENCE
    except (EvibError, OSError, ValueError) as exc:
        sys.stderr.write(f"evib: data error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
