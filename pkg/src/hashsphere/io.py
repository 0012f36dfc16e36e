"""HDR image loading, model checkpoints and result tables.

Checkpoint layout (all little-endian)::

    8 bytes   magic  b"HSPHCKPT"
    u32       format version (currently 1)
    u32       header length H
    H bytes   UTF-8 JSON header: encoder config (incl. hash primes and
              gamma), MLP config, table shapes, MLP layer shapes, dtype,
              training metadata
    payload   every encoding table (row-major), then per MLP layer its
              weight matrix (in, out) followed by its bias

The header is fully validated against the file length and the encoder
config before any array is allocated.
"""

from __future__ import annotations

import csv
import json
import math
import os
import struct
from dataclasses import asdict

import numpy as np

from .models import ENCODER_IDS, Encoder, Model
from .nn import MLPConfig, MLPParams
from .tasks.envmap import EnvMap
from .tasks.training import BANDS, TrainReport

CHECKPOINT_MAGIC = b"HSPHCKPT"
CHECKPOINT_VERSION = 1
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


class HDRFormatError(ValueError):
    """Base class for image decoding failures."""


class MalformedHeaderError(HDRFormatError):
    pass


class TruncatedDataError(HDRFormatError):
    pass


class UnsupportedFormatError(HDRFormatError):
    pass


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    """Bad magic bytes or an unknown format version."""


class CheckpointSizeError(CheckpointError):
    """Declared shapes disagree with the config or the file length."""


# -- HDR images -------------------------------------------------------------


def load_hdr(path) -> EnvMap:
    """Load a Radiance RGBE (``.hdr``) or PFM file as linear radiance."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data.startswith(b"#?"):
        return EnvMap(decode_rgbe(data))
    if data[:2] in (b"PF", b"Pf"):
        return EnvMap(decode_pfm(data))
    if not data:
        raise MalformedHeaderError("empty file")
    raise MalformedHeaderError("unrecognized image signature")


def _rgbe_header(data: bytes) -> tuple[int, int, int]:
    """Returns (height, width, offset of pixel data)."""
    pos = 0
    lines = []
    while True:
        end = data.find(b"\n", pos)
        if end < 0:
            raise MalformedHeaderError("header is not terminated by a blank line")
        line = data[pos:end]
        pos = end + 1
        if not line.strip():
            break
        lines.append(line)
    if not lines or not lines[0].startswith(b"#?"):
        raise MalformedHeaderError("missing #? signature")
    for line in lines[1:]:
        if line.startswith(b"FORMAT="):
            fmt = line[7:].strip()
            if fmt != b"32-bit_rle_rgbe":
                raise UnsupportedFormatError(f"unsupported pixel format {fmt.decode(errors='replace')}")
    end = data.find(b"\n", pos)
    if end < 0:
        raise MalformedHeaderError("missing resolution line")
    parts = data[pos:end].split()
    pos = end + 1
    if len(parts) != 4:
        raise MalformedHeaderError("malformed resolution line")
    if parts[0] != b"-Y" or parts[2] != b"+X":
        if parts[0] in (b"-Y", b"+Y", b"-X", b"+X") and parts[2] in (b"-Y", b"+Y", b"-X", b"+X"):
            raise UnsupportedFormatError("only the standard -Y H +X W orientation is supported")
        raise MalformedHeaderError("malformed resolution line")
    try:
        height, width = int(parts[1]), int(parts[3])
    except ValueError as exc:
        raise MalformedHeaderError("non-integer image size") from exc
    if height < 1 or width < 1:
        raise MalformedHeaderError("image size must be positive")
    return height, width, pos


def decode_rgbe(data: bytes) -> np.ndarray:
    """Decode Radiance RGBE bytes (flat or new-style run-length scanlines)."""
    height, width, pos = _rgbe_header(data)
    n = len(data)
    out = np.empty((height, width, 4), dtype=np.uint8)
    for y in range(height):
        if n - pos < 4:
            raise TruncatedDataError(f"scanline {y} is truncated")
        b0, b1, b2, b3 = data[pos : pos + 4]
        if 8 <= width < 32768 and b0 == 2 and b1 == 2 and not b2 & 0x80:
            if (b2 << 8) | b3 != width:
                raise MalformedHeaderError(f"scanline {y} length does not match image width")
            pos += 4
            for ch in range(4):
                x = 0
                row = out[y, :, ch]
                while x < width:
                    if pos >= n:
                        raise TruncatedDataError(f"scanline {y} is truncated")
                    count = data[pos]
                    pos += 1
                    if count > 128:
                        count -= 128
                        if x + count > width:
                            raise MalformedHeaderError(f"run overflows scanline {y}")
                        if pos >= n:
                            raise TruncatedDataError(f"scanline {y} is truncated")
                        row[x : x + count] = data[pos]
                        pos += 1
                    else:
                        if count == 0 or x + count > width:
                            raise MalformedHeaderError(f"bad literal run in scanline {y}")
                        if pos + count > n:
                            raise TruncatedDataError(f"scanline {y} is truncated")
                        row[x : x + count] = np.frombuffer(data, np.uint8, count, pos)
                        pos += count
                    x += count
        else:
            size = 4 * width
            if n - pos < size:
                raise TruncatedDataError(f"scanline {y} is truncated")
            px = np.frombuffer(data, np.uint8, size, pos).reshape(width, 4)
            if np.any(np.all(px[:, :3] == 1, axis=1)):
                raise UnsupportedFormatError("old-style run-length encoding is not supported")
            out[y] = px
            pos += size
    mant = out[..., :3].astype(np.float64)
    exp = out[..., 3].astype(np.int64)
    rgb = np.where(exp[..., None] == 0, 0.0, np.ldexp(mant, (exp - 136)[..., None]))
    return rgb.astype(np.float32)


def decode_pfm(data: bytes) -> np.ndarray:
    """Decode Portable Float Map bytes; grayscale is replicated to RGB."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedHeaderError("PFM header is incomplete")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] == b"PF":
        channels = 3
    elif tokens[0] == b"Pf":
        channels = 1
    else:
        raise UnsupportedFormatError(f"unsupported PFM variant {tokens[0]!r}")
    try:
        width, height, scale = int(tokens[1]), int(tokens[2]), float(tokens[3])
    except ValueError as exc:
        raise MalformedHeaderError("malformed PFM header values") from exc
    if width < 1 or height < 1 or scale == 0 or not math.isfinite(scale):
        raise MalformedHeaderError("PFM size must be positive and scale non-zero")
    count = width * height * channels
    if n - pos < 4 * count:
        raise TruncatedDataError("PFM raster is truncated")
    dtype = "<f4" if scale < 0 else ">f4"
    img = np.frombuffer(data, dtype, count, pos).astype(np.float32).reshape(height, width, channels)
    img = img[::-1]  # PFM stores the bottom row first
    if channels == 1:
        img = np.repeat(img, 3, axis=2)
    return np.ascontiguousarray(img)


def save_pfm(path, pixels: np.ndarray) -> None:
    """Write an ``(H, W, 3)`` float image as little-endian PFM."""
    px = np.asarray(pixels, dtype="<f4")
    h, w = px.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"PF\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(px[::-1]).tobytes())


# -- checkpoints ------------------------------------------------------------


def save_checkpoint(model: Model, path, meta: dict | None = None) -> None:
    model.check()
    dtype = model.tables[0].dtype.newbyteorder("<")
    code = dtype.str
    if code not in _DTYPES:
        raise CheckpointError(f"unsupported parameter dtype {dtype}")
    header = {
        "encoder": model.encoder.to_dict(),
        "mlp": asdict(model.mlp_config),
        "dtype": code,
        "tables": [list(t.shape) for t in model.tables],
        "mlp_layers": [list(w.shape) for w in model.mlp.weights],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for arr in model.tables:
            fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())
        for w, b in zip(model.mlp.weights, model.mlp.biases):
            fh.write(np.ascontiguousarray(w, dtype=dtype).tobytes())
            fh.write(np.ascontiguousarray(b, dtype=dtype).tobytes())


def _parse_header(data: bytes) -> tuple[dict, int]:
    if len(data) < 16:
        raise CheckpointVersionError("file too short for a checkpoint header")
    if data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointVersionError("bad checkpoint magic")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}")
    if 16 + hlen > len(data):
        raise CheckpointSizeError("header length exceeds file size")
    try:
        header = json.loads(data[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("corrupt checkpoint header") from exc
    return header, 16 + hlen


def load_checkpoint(path) -> tuple[Model, dict]:
    """Returns the model and the stored metadata dict."""
    with open(path, "rb") as fh:
        data = fh.read()
    header, pos = _parse_header(data)
    try:
        encoder = Encoder.from_dict(header["encoder"])
        mlp_cfg = MLPConfig(**header["mlp"])
        dtype = _DTYPES[header["dtype"]]
        table_shapes = [tuple(s) for s in header["tables"]]
        layer_shapes = [tuple(s) for s in header["mlp_layers"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid checkpoint header: {exc}") from exc

    expected_tables = [(rows, encoder.features) for rows in encoder.table_rows()]
    if table_shapes != expected_tables:
        raise CheckpointSizeError("table shapes disagree with the encoder config")
    widths = mlp_cfg.widths
    if layer_shapes != list(zip(widths, widths[1:])):
        raise CheckpointSizeError("MLP layer shapes disagree with the MLP config")
    if mlp_cfg.input_width != encoder.output_width:
        raise CheckpointSizeError("MLP input width disagrees with the encoding width")
    scalars = sum(r * c for r, c in table_shapes) + sum(i * o + o for i, o in layer_shapes)
    remaining = len(data) - pos
    if remaining != scalars * dtype.itemsize:
        raise CheckpointSizeError(
            f"payload has {remaining} bytes, header declares {scalars * dtype.itemsize}"
        )

    def take(shape):
        nonlocal pos
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype, count, pos).reshape(shape).astype(dtype.newbyteorder("="))
        pos += count * dtype.itemsize
        return arr

    tables = [take(s) for s in table_shapes]
    weights, biases = [], []
    for i, o in layer_shapes:
        weights.append(take((i, o)))
        biases.append(take((o,)))
    return Model(encoder, tables, mlp_cfg, MLPParams(weights, biases)), header.get("meta", {})


# -- result tables ----------------------------------------------------------

CSV_COLUMNS = [
    "encoder_id", "levels", "table_cap", "features", "seed", "steps",
    "encoding_bytes", "mlp_bytes", "memory_bytes", "dense_table_bytes",
    "initial_rel_l2", "final_rel_l2", "final_psnr", "train_error", "novel_error",
    "polar_ratio", "wall_seconds",
] + [f"band_{i:02d}" for i in range(BANDS)]


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def report_row(report: TrainReport) -> list[str]:
    enc = report.config.get("encoder", {}).get("config", {})
    train = report.config.get("train", {})
    cap = enc.get("table_cap", enc.get("hash", {}).get("table_cap", 0))
    bands = list(report.band_errors) + [float("nan")] * (BANDS - len(report.band_errors))
    values = [
        ENCODER_IDS.get(report.encoder, -1), enc.get("levels", 0), cap, enc.get("features", 0),
        train.get("seed", 0), train.get("steps", 0),
        report.encoding_bytes, report.mlp_bytes, report.memory_bytes, report.dense_table_bytes,
        report.initial_rel_l2, report.final_rel_l2, report.final_psnr, report.train_error,
        report.novel_error, report.polar_ratio, report.wall_seconds,
    ] + bands
    return [_fmt(v) for v in values]


def write_results_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for report in reports:
            writer.writerow(report_row(report))


def read_results_csv(path) -> list[dict[str, float]]:
    with open(path, newline="", encoding="ascii") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_loss_log(report: TrainReport, path) -> None:
    """One JSON object per line: ``{"step": i, "loss": value}``."""
    with open(path, "w", encoding="ascii") as fh:
        for step, loss in enumerate(report.loss_curve):
            fh.write(json.dumps({"step": step, "loss": loss}) + "\n")


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
