"""On-disk formats for waveforms and trial records.

Waveform, binary: ``<stem>.f64`` raw little-endian float64 plus
``<stem>.json`` sidecar ``{"rate_hz", "unit", "length"}``.  Round-trips
bit-exactly.

Waveform, CSV: header ``time_s,value,unit,rate_hz``, one row per sample,
values printed with ``repr`` so they also round-trip exactly.

Trial directory: one binary waveform per channel, ``position.csv`` with
``time_s,position_mm`` and ``meta.json``.
"""

import csv
import json
import os

import numpy as np

from .errors import FormatError
from .plantsim import TrialRecord
from .signalcore import Unit, Waveform

WAVE_CSV_HEADER = ("time_s", "value", "unit", "rate_hz")
POSITION_HEADER = ("time_s", "position_mm")
CHANNELS = ("voltage", "force_x", "force_y", "force_normal", "accel_x", "accel_y", "accel_z")
FORMAT_VERSION = 1


def dump_json(obj, path):
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_waveform_bin(w, stem):
    stem = os.fspath(stem)
    w.samples.astype("<f8").tofile(stem + ".f64")
    dump_json({"rate_hz": w.rate, "unit": w.unit.value, "length": len(w)}, stem + ".json")


def read_waveform_bin(stem):
    stem = os.fspath(stem)
    side = load_json(stem + ".json")
    try:
        x = np.fromfile(stem + ".f64", dtype="<f8")
    except OSError as exc:
        raise FormatError(f"{stem}.f64: {exc}") from exc
    if set(side) != {"rate_hz", "unit", "length"}:
        raise FormatError(f"{stem}.json: expected keys rate_hz, unit, length")
    if x.size != side["length"]:
        raise FormatError(f"{stem}.f64: {x.size} samples, sidecar says {side['length']}")
    try:
        return Waveform(x, side["rate_hz"], Unit(side["unit"]))
    except ValueError as exc:
        raise FormatError(f"{stem}: {exc}") from exc


def write_waveform_csv(w, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(WAVE_CSV_HEADER)
        unit, rate = w.unit.value, repr(w.rate)
        for i, v in enumerate(w.samples):
            wr.writerow((repr(i / w.rate), repr(float(v)), unit, rate))


def read_waveform_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != WAVE_CSV_HEADER:
        raise FormatError(f"{path}: header must be {','.join(WAVE_CSV_HEADER)}")
    body = rows[1:]
    if not body:
        raise FormatError(f"{path}: no samples")
    try:
        values = np.array([float(r[1]) for r in body])
        units = {r[2] for r in body}
        rates = {float(r[3]) for r in body}
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if len(units) != 1 or len(rates) != 1:
        raise FormatError(f"{path}: unit and rate must be constant")
    try:
        return Waveform(values, rates.pop(), Unit(units.pop()))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def read_waveform(path):
    """Read either format, chosen by extension (``.csv`` or a binary stem / ``.f64``)."""
    path = os.fspath(path)
    if path.endswith(".csv"):
        return read_waveform_csv(path)
    if path.endswith(".f64") or path.endswith(".json"):
        path = path.rsplit(".", 1)[0]
    return read_waveform_bin(path)


def write_trial(rec, directory):
    os.makedirs(directory, exist_ok=True)
    for name in CHANNELS:
        write_waveform_bin(getattr(rec, name), os.path.join(directory, name))
    with open(os.path.join(directory, "position.csv"), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(POSITION_HEADER)
        for t, x in zip(rec.position_t, rec.position_mm):
            wr.writerow((repr(float(t)), repr(float(x))))
    meta = dict(rec.meta)
    meta["format_version"] = FORMAT_VERSION
    dump_json(meta, os.path.join(directory, "meta.json"))


def read_trial(directory):
    meta = load_json(os.path.join(directory, "meta.json"))
    if meta.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{directory}: unsupported format_version")
    chans = {name: read_waveform_bin(os.path.join(directory, name)) for name in CHANNELS}
    try:
        with open(os.path.join(directory, "position.csv"), newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != POSITION_HEADER:
            raise FormatError(f"{directory}/position.csv: bad header")
        pos = np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1, 2)
        return TrialRecord(position_t=pos[:, 0], position_mm=pos[:, 1], meta=meta, **chans)
    except (OSError, ValueError) as exc:
        raise FormatError(f"{directory}: {exc}") from exc
