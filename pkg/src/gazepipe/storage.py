"""On-disk dataset layout: a JSON manifest plus one CSV per segment and modality.

Layout of a dataset directory::

    manifest.json
    segments/s00_t00_w000_heog.csv    time_s,heog_uv
    segments/s00_t00_w000_nemg.csv    time_s,left_uv,right_uv
    segments/s00_t00_w000_imu.csv     time_s,gyro_x..z,accel_x..z,mag_x..z,true_yaw_deg

Values are written with 17 significant digits so a round trip is exact.
Sample rate and time origin live in the manifest; the ``time_s`` column is
there for people reading the files.
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

import numpy as np

from . import config as kv
from .dsp import Waveform
from .errors import ConfigError, ValidationError
from .synthgen import (
    Dataset,
    Experiment,
    GazeShift,
    GeneratorConfig,
    ImuSeries,
    Segment,
    StrategyProfile,
)

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
SEGMENT_DIR = "segments"

IMU_COLUMNS = (
    "gyro_x", "gyro_y", "gyro_z",
    "accel_x", "accel_y", "accel_z",
    "mag_x", "mag_y", "mag_z",
    "true_yaw_deg",
)


def generator_config_from_mapping(cfg: dict, source="<config>", **overrides) -> GeneratorConfig:
    """GeneratorConfig from parsed key=value text plus keyword overrides."""
    ints = ("n_subjects", "n_trials_per_subject", "master_seed", "switches_per_trial")
    floats = ("noise_scale", "strategy_mean", "strategy_spread")
    kv.check_keys(cfg, ints + floats + ("experiment", "degraded_nemg"), source)
    kw = {}
    for k, v in cfg.items():
        if k in ints:
            kw[k] = kv.as_int(k, v)
        elif k in floats:
            kw[k] = kv.as_float(k, v)
        elif k == "degraded_nemg":
            kw[k] = kv.as_bool(k, v)
        else:
            kw[k] = Experiment.parse(v)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return GeneratorConfig(**kw)


def _config_echo(cfg: GeneratorConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["experiment"] = cfg.experiment.value
    return out


def _segment_stem(seg: Segment) -> str:
    return f"s{seg.subject:02d}_t{seg.trial:02d}_w{seg.switch_index:03d}"


def _write_csv(path: Path, header, times, columns) -> None:
    data = np.column_stack([times] + list(columns))
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def _read_csv(path: Path, n_columns: int) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != n_columns:
        raise ValidationError(f"{path}: expected {n_columns} columns, found {data.shape[1]}")
    return data


def write_dataset(dataset: Dataset, out_dir) -> Path:
    """Write the dataset; returns the manifest path. Raises OSError on I/O failure."""
    out = Path(out_dir)
    (out / SEGMENT_DIR).mkdir(parents=True, exist_ok=True)
    records = []
    for seg in dataset.segments:
        stem = _segment_stem(seg)
        files = {}
        rates = {}
        rel = f"{SEGMENT_DIR}/{stem}_heog.csv"
        _write_csv(out / rel, ("time_s", "heog_uv"), seg.heog.times, [seg.heog.samples])
        files["heog"] = rel
        rates["heog"] = [seg.heog.rate_hz, seg.heog.t0_s]
        if seg.nemg is not None:
            left, right = seg.nemg
            rel = f"{SEGMENT_DIR}/{stem}_nemg.csv"
            _write_csv(out / rel, ("time_s", "left_uv", "right_uv"), left.times,
                       [left.samples, right.samples])
            files["nemg"] = rel
            rates["nemg"] = [left.rate_hz, left.t0_s]
        if seg.imu is not None:
            imu = seg.imu
            truth = imu.true_yaw_deg if imu.true_yaw_deg is not None else np.full(len(imu), np.nan)
            rel = f"{SEGMENT_DIR}/{stem}_imu.csv"
            _write_csv(out / rel, ("time_s",) + IMU_COLUMNS, imu.times,
                       list(imu.gyro.T) + list(imu.accel.T) + list(imu.mag.T) + [truth])
            files["imu"] = rel
            rates["imu"] = [imu.rate_hz, imu.t0_s]
        rec = {
            "subject": seg.subject,
            "trial": seg.trial,
            "switch_index": seg.switch_index,
            "delta_deg": seg.shift.delta_deg,
            "files": files,
            "timing": rates,
        }
        if seg.strategy is not None:
            rec["strategy"] = dataclasses.asdict(seg.strategy)
        records.append(rec)
    manifest = {
        "format_version": FORMAT_VERSION,
        "experiment": dataset.experiment.value,
        "generator": _config_echo(dataset.config),
        "segments": records,
    }
    path = out / MANIFEST
    tmp = path.with_suffix(".json.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def read_manifest(data_dir) -> dict:
    """Load and validate the manifest. Raises ValidationError or OSError."""
    root = Path(data_dir)
    with open(root / MANIFEST, encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"manifest is not valid JSON: {exc}") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported manifest version {manifest.get('format_version')!r}")
    try:
        exp = Experiment.parse(manifest["experiment"])
        records = manifest["segments"]
        gen = dict(manifest["generator"])
    except (KeyError, ConfigError) as exc:
        raise ValidationError(f"manifest is missing or has a bad field: {exc}") from None
    for n, rec in enumerate(records):
        if rec.get("delta_deg") not in exp.deltas:
            raise ValidationError(
                f"segment record {n}: label {rec.get('delta_deg')!r} is not in the "
                f"{exp.value} label set {exp.deltas}"
            )
        for rel in rec.get("files", {}).values():
            if not (root / rel).is_file():
                raise ValidationError(f"segment record {n}: missing file {rel}")
        if "heog" not in rec.get("files", {}):
            raise ValidationError(f"segment record {n}: no HEOG file")
    if gen.get("experiment") != exp.value:
        raise ValidationError("manifest experiment and generator echo disagree")
    return manifest


def read_dataset(data_dir) -> Dataset:
    root = Path(data_dir)
    manifest = read_manifest(root)
    gen = dict(manifest["generator"])
    gen["experiment"] = Experiment.parse(gen["experiment"])
    try:
        cfg = GeneratorConfig(**gen)
    except (TypeError, ConfigError) as exc:
        raise ValidationError(f"manifest generator echo is invalid: {exc}") from None
    records = manifest["segments"]
    if len(records) != cfg.n_segments:
        raise ValidationError(
            f"manifest lists {len(records)} segments but the generator plan has {cfg.n_segments}"
        )
    segments = []
    for rec in records:
        files, timing = rec["files"], rec["timing"]
        shift = GazeShift.from_delta(rec["delta_deg"], cfg.experiment)
        d = _read_csv(root / files["heog"], 2)
        heog = Waveform(d[:, 1], timing["heog"][0], timing["heog"][1])
        nemg = imu = None
        if "nemg" in files:
            d = _read_csv(root / files["nemg"], 3)
            rate, t0 = timing["nemg"]
            nemg = (Waveform(d[:, 1], rate, t0), Waveform(d[:, 2], rate, t0))
        if "imu" in files:
            d = _read_csv(root / files["imu"], 1 + len(IMU_COLUMNS))
            rate, t0 = timing["imu"]
            truth = d[:, 10]
            imu = ImuSeries(d[:, 1:4], d[:, 4:7], d[:, 7:10], rate, t0,
                            None if np.all(np.isnan(truth)) else truth)
        strategy = StrategyProfile(**rec["strategy"]) if "strategy" in rec else None
        segments.append(
            Segment(rec["subject"], rec["trial"], rec["switch_index"], shift, heog, nemg, imu,
                    strategy)
        )
    return Dataset(cfg, segments)
