"""Dataset files, binary model files, prediction dumps and training logs.

Dataset files are JSON lines, one sequence per line::

    {"seq_id": "a", "t_end": 1.0, "events": [{"t": 0.3, "k": 0}]}

An optional first line without an ``events`` key is a header; it may set
``num_types``, ``time_unit`` and ``k_base`` (1 when type ids in the file are
1-based). Sequences start at time 0.

Model files are a fixed header followed by little-endian float64 values::

    magic  b"ERRKMDL\\0"   8 bytes
    version                uint32
    family tag             16 bytes, ASCII, NUL padded
    K                      uint32
    parameter count        uint64
    parameters             count * float64
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import Dataset, EventSequence, SequenceError, perturb_ties
from .energy import EnergyFunction, FeatureConfig
from .models import FAMILIES, IntensityModel

MAGIC = b"ERRKMDL\0"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sI16sIQ")
ENERGY_TAG = "energy_mlp"


class DataError(ValueError):
    """Input data could not be used."""


class DatasetParseError(DataError):
    def __init__(self, path, line_no, message):
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class SchemaError(DataError):
    pass


class ModelFormatError(DataError):
    """Not a model file (bad magic or unknown family)."""


class ModelCorruptError(DataError):
    """A model file is truncated or carries trailing bytes."""


class ModelVersionError(DataError):
    """A model file was written by an incompatible format version."""


# ---------------------------------------------------------------- datasets

_HEADER_KEYS = {"num_types", "time_unit", "k_base"}


def _parse_sequence(obj, line_no, path, k_base):
    if not isinstance(obj, dict) or "events" not in obj:
        raise DatasetParseError(path, line_no, "expected an object with an 'events' list")
    try:
        events = obj["events"]
        times = [float(e["t"]) for e in events]
        types = [int(e["k"]) - k_base for e in events]
        t_end = float(obj["t_end"]) if "t_end" in obj else (max(times) if times else 0.0)
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetParseError(path, line_no, f"bad event record: {exc}") from None
    order = np.argsort(times, kind="stable")
    times = perturb_ties(np.asarray(times)[order])
    types = np.asarray(types, dtype=np.int64)[order]
    if types.size and types.min() < 0:
        raise SchemaError(f"{path}:{line_no}: type id below k_base={k_base}")
    try:
        seq = EventSequence(times, types, 0.0, t_end)
    except SequenceError as exc:
        raise DatasetParseError(path, line_no, str(exc)) from None
    return str(obj.get("seq_id", line_no)), seq


def load_dataset(path, num_types: int | None = None) -> Dataset:
    """Read a JSON-lines dataset.

    K comes from ``num_types``, else the header, else the largest type id + 1.
    Events are sorted by time and exact ties are separated with the core tie
    rule.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    header = {}
    ids, seqs = [], []
    with path.open() as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(path, line_no, f"invalid JSON: {exc.msg}") from None
            if not seqs and not header and isinstance(obj, dict) and "events" not in obj \
                    and _HEADER_KEYS & obj.keys():
                header = obj
                continue
            sid, seq = _parse_sequence(obj, line_no, path, int(header.get("k_base", 0)))
            ids.append(sid)
            seqs.append(seq)
    if num_types is not None and "num_types" in header and int(header["num_types"]) != num_types:
        raise SchemaError(f"{path}: header declares K={header['num_types']}, expected {num_types}")
    K = num_types or header.get("num_types")
    if K is None:
        K = 1 + max((int(s.types.max()) for s in seqs if len(s)), default=0)
    K = int(K)
    for sid, s in zip(ids, seqs):
        if len(s) and s.types.max() >= K:
            raise SchemaError(f"{path}: sequence {sid!r} has type id {s.types.max()} >= K={K}")
    return Dataset(seqs, K, str(header.get("time_unit", "1")), ids)


def _events_json(seq: EventSequence, k_base=0):
    return [{"t": float(t), "k": int(k) + k_base} for t, k in zip(seq.times, seq.types)]


def save_dataset(data: Dataset, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        header = {"num_types": data.num_types, "time_unit": data.time_unit, "k_base": 0}
        fh.write(json.dumps(header) + "\n")
        for sid, s in zip(data.seq_ids, data.sequences):
            rec = {"seq_id": sid, "t_end": s.t_end, "events": _events_json(s)}
            fh.write(json.dumps(rec) + "\n")


# ------------------------------------------------------------------ models

def _energy_vector(fn: EnergyFunction) -> np.ndarray:
    hidden = fn.sizes[1:-1]
    meta = [fn.cfg.time_basis_count, fn.cfg.window_count, len(hidden), *hidden]
    return np.concatenate([np.asarray(meta, float), fn.feat_mean, fn.feat_std, fn.theta])


def _energy_from_vector(K, vec) -> EnergyFunction:
    B, W, L = (int(v) for v in vec[:3])
    hidden = tuple(int(v) for v in vec[3 : 3 + L])
    cfg = FeatureConfig(K, B, W)
    pos = 3 + L
    D = cfg.dim
    mean, std = vec[pos : pos + D], vec[pos + D : pos + 2 * D]
    return EnergyFunction(cfg, hidden, vec[pos + 2 * D :], mean, std)


def _family_tag(model) -> str:
    if isinstance(model, EnergyFunction):
        return ENERGY_TAG
    for tag, cls in FAMILIES.items():
        if type(model) is cls:
            return tag
    raise TypeError(f"cannot serialise {type(model).__name__}")


def model_to_bytes(model) -> bytes:
    tag = _family_tag(model)
    if isinstance(model, EnergyFunction):
        K, vec = model.cfg.num_types, _energy_vector(model)
    else:
        K, vec = model.num_types, model.to_vector()
    vec = np.ascontiguousarray(vec, dtype="<f8")
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, tag.encode("ascii"), K, vec.size)
    return head + vec.tobytes()


def model_from_bytes(raw: bytes, source="<bytes>"):
    if len(raw) < len(MAGIC) or raw[: len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"{source}: not a model file (bad magic)")
    if len(raw) < _HEADER.size:
        raise ModelCorruptError(f"{source}: truncated header")
    _, version, tag, K, count = _HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"{source}: format version {version}, this build reads version {FORMAT_VERSION}"
        )
    expected = _HEADER.size + 8 * count
    if len(raw) != expected:
        raise ModelCorruptError(f"{source}: expected {expected} bytes, found {len(raw)}")
    vec = np.frombuffer(raw, dtype="<f8", count=count, offset=_HEADER.size).astype(np.float64)
    tag = tag.rstrip(b"\0").decode("ascii", errors="replace")
    try:
        if tag == ENERGY_TAG:
            return _energy_from_vector(K, vec)
        if tag in FAMILIES:
            return FAMILIES[tag].from_vector(K, vec)
    except (ValueError, IndexError) as exc:
        raise ModelCorruptError(f"{source}: inconsistent parameters: {exc}") from None
    raise ModelFormatError(f"{source}: unknown model family {tag!r}")


def save_model(path, model: IntensityModel | EnergyFunction) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(model_to_bytes(model))


def load_model(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"model file not found: {path}")
    return model_from_bytes(path.read_bytes(), str(path))


# ------------------------------------------------------- predictions, logs

def dump_json(obj) -> str:
    """Canonical JSON: sorted keys, fixed separators, shortest float repr."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_jsonl(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for rec in records:
            fh.write(dump_json(rec) + "\n")


def read_jsonl(path) -> list:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    out = []
    with path.open() as fh:
        for line_no, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise DatasetParseError(path, line_no, f"invalid JSON: {exc.msg}") from None
    return out


def prediction_record(seq_id, T, T_prime, chosen, proposals, truth_energy=None) -> dict:
    """One line of a prediction dump; ``base_events`` is the first proposal."""
    rec = {
        "seq_id": seq_id,
        "T": T,
        "T_prime": T_prime,
        "events": _events_json(chosen),
        "base_events": _events_json(proposals[0].continuation),
        "energies": [p.energy for p in proposals],
        "weights": [p.weight for p in proposals],
    }
    if truth_energy is not None:
        rec["truth_energy"] = truth_energy
    return rec


def record_sequence(rec, key="events") -> EventSequence:
    times = [e["t"] for e in rec[key]]
    types = [e["k"] for e in rec[key]]
    return EventSequence(times, types, rec["T"], rec["T_prime"])


def strip_wall_clock(obj):
    """Drop timing fields (``wall_ms`` and friends) recursively."""
    if isinstance(obj, dict):
        return {k: strip_wall_clock(v) for k, v in obj.items() if not k.startswith("wall")}
    if isinstance(obj, list):
        return [strip_wall_clock(v) for v in obj]
    return obj
