"""Binary grid ("NCG1") and CSV/JSON export helpers.

NCG1 layout: a 16-byte little-endian header followed by row-major float64
payload. Header bytes 0-3 are the magic ``NCG1``, bytes 4-5 a uint16 axis
count (max 5), bytes 6-15 five uint16 per-axis sizes (unused slots zero).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import SpecFormatError

MAGIC = b"NCG1"
_HEADER = struct.Struct("<4sH5H")
MAX_AXES = 5
MAX_AXIS_SIZE = 0xFFFF


def write_grid(path, array: np.ndarray) -> None:
    a = np.ascontiguousarray(array, dtype="<f8")
    if a.ndim > MAX_AXES:
        raise ValueError(f"NCG1 supports at most {MAX_AXES} axes, got {a.ndim}")
    if any(s > MAX_AXIS_SIZE for s in a.shape):
        raise ValueError(f"NCG1 axis sizes limited to {MAX_AXIS_SIZE}, got {a.shape}")
    sizes = list(a.shape) + [0] * (MAX_AXES - a.ndim)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, a.ndim, *sizes))
        fh.write(a.tobytes())


def read_grid(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SpecFormatError(f"{path}: truncated NCG1 header")
    magic, ndim, *sizes = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SpecFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if not 1 <= ndim <= MAX_AXES:
        raise SpecFormatError(f"{path}: invalid axis count {ndim}")
    shape = tuple(sizes[:ndim])
    expected = int(np.prod(shape)) * 8
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise SpecFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} for shape {shape}")
    return np.frombuffer(payload, dtype="<f8").reshape(shape).copy()


def write_record_csv(path, times: np.ndarray, u: np.ndarray) -> None:
    """CSV with header ``t_ms, n0, n1, ...`` and one row per recorded step."""
    header = "t_ms," + ",".join(f"n{i}" for i in range(u.shape[1]))
    data = np.column_stack([times, u])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def write_record_binary(path, times: np.ndarray, u: np.ndarray) -> None:
    """NCG1-framed record: rows = recorded steps, first column is t_ms."""
    write_grid(path, np.column_stack([times, u]))


def read_record_binary(path) -> tuple[np.ndarray, np.ndarray]:
    data = read_grid(path)
    if data.ndim != 2 or data.shape[1] < 2:
        raise SpecFormatError(f"{path}: not a record matrix")
    return data[:, 0], data[:, 1:]


def write_trace_csv(path, times: np.ndarray, v: np.ndarray) -> None:
    np.savetxt(path, np.column_stack([times, v]), delimiter=",",
               header="t_ms,v_model_mV", comments="", fmt="%.17g")


def read_trace_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 2:
        raise SpecFormatError(f"{path}: expected two columns (t_ms, v)")
    return data[:, 0], data[:, 1]


def write_weights_csv(path, neuron_ids, weights) -> None:
    with open(path, "w") as fh:
        fh.write("neuron_id,weight\n")
        for nid, w in zip(neuron_ids, weights):
            fh.write(f"{nid},{w!r}\n")


def write_spikes_json(path, neuron_ids, spike_times) -> None:
    payload = [{"neuron_id": int(nid), "times": [float(t) for t in ts]}
               for nid, ts in zip(neuron_ids, spike_times)]
    Path(path).write_text(json.dumps(payload))
