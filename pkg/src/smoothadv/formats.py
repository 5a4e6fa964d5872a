"""On-disk formats: the flat parameter file and the CSV outputs.

Parameter file layout (all little-endian)::

    8 bytes   b"SATPARAM"
    u32       format version (1)
    u32       number of layer sizes L
    L x u32   layer sizes (input, hidden..., classes)
    f64[]     parameter vector in network layout

Floats in CSVs are written with ``repr`` so they parse back bit-exactly;
missing values are empty fields.
"""
from __future__ import annotations

import csv
import math
import struct
from pathlib import Path

import numpy as np

from .network import NetworkSpec

PARAM_MAGIC = b"SATPARAM"
PARAM_VERSION = 1

LANDSCAPE_COLUMNS = ("a", "b", "loss")
SMOOTHNESS_COLUMNS = ("epoch", "max_eig", "trace", "grad_norm")
PROBE_COLUMNS = ("sample_id", "power_value", "lower", "upper", "rayleigh", "grad_norm")


class FormatError(ValueError):
    pass


def params_to_bytes(params, layer_sizes) -> bytes:
    params = np.asarray(params, dtype="<f8")
    sizes = [int(s) for s in layer_sizes]
    expected = NetworkSpec(tuple(sizes)).n_params
    if params.size != expected:
        raise ValueError(f"{params.size} parameters do not match layer sizes {sizes}")
    head = PARAM_MAGIC + struct.pack(f"<II{len(sizes)}I", PARAM_VERSION, len(sizes), *sizes)
    return head + params.tobytes()


def params_from_bytes(buf: bytes):
    """Return ``(layer_sizes, params)``."""
    if len(buf) < 16 or buf[:8] != PARAM_MAGIC:
        raise FormatError("not a parameter file (bad magic)")
    version, count = struct.unpack("<II", buf[8:16])
    if version != PARAM_VERSION:
        raise FormatError(f"unsupported parameter file version {version}")
    end = 16 + 4 * count
    if len(buf) < end:
        raise FormatError("truncated layer table")
    sizes = tuple(struct.unpack(f"<{count}I", buf[16:end]))
    n = NetworkSpec(sizes).n_params
    if len(buf) != end + 8 * n:
        raise FormatError(f"expected {n} float64 values, file holds {(len(buf) - end) / 8:g}")
    return sizes, np.frombuffer(buf, dtype="<f8", offset=end).astype(np.float64)


def save_params(path, params, layer_sizes) -> None:
    Path(path).write_bytes(params_to_bytes(params, layer_sizes))


def load_params(path):
    return params_from_bytes(Path(path).read_bytes())


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    return "" if math.isnan(f) else repr(f)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(c) for c in columns]
            w.writerow([_fmt(v) for v in row])


def read_csv(path, int_columns=("epoch", "sample_id")):
    """Rows as dicts of floats (ints for ``int_columns``; NaN for empty fields)."""
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        out = []
        for raw in r:
            row = {}
            for k, v in zip(header, raw):
                if v == "":
                    row[k] = math.nan
                elif k in int_columns:
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            out.append(row)
    return header, out


def write_history_csv(path, history) -> None:
    from .trainer import HISTORY_COLUMNS
    write_csv(path, HISTORY_COLUMNS, history.rows)


def write_landscape_csv(path, grid) -> None:
    write_csv(path, LANDSCAPE_COLUMNS, grid.rows())


def write_smoothness_csv(path, reports) -> None:
    write_csv(path, SMOOTHNESS_COLUMNS,
              ([r.epoch, r.max_eig, r.trace, r.grad_norm] for r in reports))


def write_probe_csv(path, estimates) -> None:
    write_csv(path, PROBE_COLUMNS,
              ([i, e.power_value, e.lower, e.upper, e.rayleigh, e.grad_norm]
               for i, e in enumerate(estimates)))
