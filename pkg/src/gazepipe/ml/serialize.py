"""Versioned flat binary model format.

Layout (all integers little-endian)::

    b"GZML"  u16 version  u8 kind  u16 n_classes
    u8 ndim, u32 dims...                     input shape
    u16 len, ascii                           modalities joined by '+'
    u16 len, ascii                           config as 'key=value;...'
    u32 n_arrays
      per array: u16 len, ascii name, u8 ndim, u32 dims...
    float64 little-endian values of every array, in header order
"""

from __future__ import annotations

import dataclasses
import io
import struct

import numpy as np

from ..errors import ValidationError
from .model import ArchConfig, InputSpec, SvmConfig, TrainedModel

MAGIC = b"GZML"
VERSION = 1
KIND_CODES = {"SVM": 0, "FCN": 1, "LSTM": 2, "CNN": 3}
CODE_KINDS = {v: k for k, v in KIND_CODES.items()}


def _put_str(buf, s: str):
    data = s.encode("ascii")
    buf.write(struct.pack("<H", len(data)))
    buf.write(data)


def _get_str(buf) -> str:
    (n,) = struct.unpack("<H", buf.read(2))
    return buf.read(n).decode("ascii")


def _encode_config(cfg) -> str:
    if cfg is None:
        return ""
    parts = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif v is None:
            v = "none"
        parts.append(f"{f.name}={v!r}" if isinstance(v, float) else f"{f.name}={v}")
    return ";".join(parts)


def _decode_config(kind: str, text: str):
    if not text:
        return None
    raw = dict(item.split("=", 1) for item in text.split(";"))
    cls = SvmConfig if kind == "SVM" else ArchConfig
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in raw:
            continue
        v = raw[f.name]
        default = f.default
        if v == "none":
            kwargs[f.name] = None
        elif isinstance(default, tuple):
            kwargs[f.name] = tuple(int(x) for x in v.split(",") if x)
        elif isinstance(default, bool):
            kwargs[f.name] = v == "True"
        elif isinstance(default, int):
            kwargs[f.name] = int(v)
        elif isinstance(default, float) or default is None:
            kwargs[f.name] = float(v)
        else:
            kwargs[f.name] = v
    return cls(**kwargs)


def dumps(model: TrainedModel) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HBH", VERSION, KIND_CODES[model.kind], model.n_classes))
    shape = tuple(model.input_spec.shape)
    buf.write(struct.pack("<B", len(shape)))
    buf.write(struct.pack(f"<{len(shape)}I", *shape))
    _put_str(buf, "+".join(model.input_spec.modalities))
    _put_str(buf, _encode_config(model.config))
    names = sorted(model.params)
    buf.write(struct.pack("<I", len(names)))
    for name in names:
        arr = model.params[name]
        _put_str(buf, name)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    for name in names:
        buf.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
    return buf.getvalue()


def _read_header(buf) -> dict:
    try:
        return _parse_header(buf)
    except (struct.error, UnicodeDecodeError) as exc:
        raise ValidationError(f"truncated or corrupt GZML header: {exc}") from None


def _parse_header(buf) -> dict:
    if buf.read(4) != MAGIC:
        raise ValidationError("not a GZML model file")
    version, code, n_classes = struct.unpack("<HBH", buf.read(5))
    if version != VERSION:
        raise ValidationError(f"unsupported GZML version {version}")
    if code not in CODE_KINDS:
        raise ValidationError(f"unknown model kind code {code}")
    (ndim,) = struct.unpack("<B", buf.read(1))
    shape = struct.unpack(f"<{ndim}I", buf.read(4 * ndim))
    modalities = tuple(m for m in _get_str(buf).split("+") if m)
    config = _get_str(buf)
    (n_arrays,) = struct.unpack("<I", buf.read(4))
    arrays = []
    for _ in range(n_arrays):
        name = _get_str(buf)
        (nd,) = struct.unpack("<B", buf.read(1))
        dims = struct.unpack(f"<{nd}I", buf.read(4 * nd))
        arrays.append((name, dims))
    return {
        "version": version,
        "kind": CODE_KINDS[code],
        "n_classes": n_classes,
        "input_shape": tuple(shape),
        "modalities": modalities,
        "config": config,
        "arrays": arrays,
    }


def loads(data: bytes) -> TrainedModel:
    buf = io.BytesIO(data)
    header = _read_header(buf)
    params = {}
    for name, dims in header["arrays"]:
        count = int(np.prod(dims)) if dims else 1
        raw = buf.read(8 * count)
        if len(raw) != 8 * count:
            raise ValidationError(f"truncated parameter block for {name}")
        params[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)
    spec = InputSpec(header["input_shape"], header["modalities"], header["n_classes"])
    cfg = _decode_config(header["kind"], header["config"])
    return TrainedModel(header["kind"], params, spec, cfg)


def save(model: TrainedModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load(path) -> TrainedModel:
    with open(path, "rb") as fh:
        return loads(fh.read())


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh)


def format_header(header: dict) -> str:
    lines = [
        f"format: GZML v{header['version']}",
        f"kind: {header['kind']}",
        f"classes: {header['n_classes']}",
        f"input shape: {'x'.join(str(d) for d in header['input_shape'])}",
        f"modalities: {'+'.join(header['modalities']) or '-'}",
        f"config: {header['config'] or '-'}",
        f"arrays: {len(header['arrays'])}",
    ]
    total = 0
    for name, dims in header["arrays"]:
        count = int(np.prod(dims)) if dims else 1
        total += count
        lines.append(f"  {name} {tuple(dims)}")
    lines.append(f"parameters: {total}")
    return "\n".join(lines)
