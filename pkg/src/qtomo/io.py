"""Binary dataset and checkpoint files, flat key=value run configs.

Dataset (``QTDS``)::

    magic "QTDS" | version u32 | n_qubits u32 | count u64 |
    count * d*d * (re f64, im f64) row-major | CRC32 u32 of the payload

Checkpoint (``QTNN``)::

    magic "QTNN" | version u32 | kind (u32 length + ascii) |
    n_arrays u32 | per array: name (u32 length + ascii), ndim u32, dims u64... |
    metadata (u64 length + utf-8 JSON) | flat weights f64

All integers and floats are little-endian.
"""

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidSpec
from .nn import ModelWeights

DATASET_MAGIC = b"QTDS"
DATASET_VERSION = 1
CHECKPOINT_MAGIC = b"QTNN"
CHECKPOINT_VERSION = 1
CONFIG_SCHEMA_VERSION = 1


# ------------------------------------------------------------------ datasets


def dataset_bytes(states, n_qubits):
    states = np.asarray(states, dtype=complex)
    d = 2**n_qubits
    if states.size and states.shape[1:] != (d, d):
        raise InvalidSpec(f"states of shape {states.shape[1:]} for {n_qubits} qubits")
    count = len(states) if states.size else 0
    payload = np.ascontiguousarray(states.reshape(count, d, d)).astype("<c16").tobytes()
    header = DATASET_MAGIC + struct.pack("<IIQ", DATASET_VERSION, n_qubits, count)
    return header + payload + struct.pack("<I", zlib.crc32(payload))


def write_dataset(path, states, n_qubits):
    Path(path).write_bytes(dataset_bytes(states, n_qubits))


def _dataset_header(raw):
    if len(raw) < 20 or raw[:4] != DATASET_MAGIC:
        raise FormatError("not a QTDS dataset file")
    version, n_qubits, count = struct.unpack_from("<IIQ", raw, 4)
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    return {"format": "QTDS", "version": version, "n_qubits": n_qubits, "count": count}


def read_dataset(path):
    """Returns ``(states, n_qubits)``; checks size and CRC32."""
    raw = Path(path).read_bytes()
    head = _dataset_header(raw)
    d = 2 ** head["n_qubits"]
    size = head["count"] * d * d * 16
    if len(raw) != 20 + size + 4:
        raise FormatError("dataset file has the wrong length")
    payload = raw[20 : 20 + size]
    (crc,) = struct.unpack_from("<I", raw, 20 + size)
    if crc != zlib.crc32(payload):
        raise FormatError("dataset CRC mismatch")
    states = np.frombuffer(payload, dtype="<c16").astype(complex).reshape(head["count"], d, d)
    return states, head["n_qubits"]


# --------------------------------------------------------------- checkpoints


def _pack_str(s):
    b = s.encode("ascii")
    return struct.pack("<I", len(b)) + b


def _unpack_str(raw, pos):
    (n,) = struct.unpack_from("<I", raw, pos)
    return raw[pos + 4 : pos + 4 + n].decode("ascii"), pos + 4 + n


def checkpoint_bytes(kind, weights: ModelWeights, metadata):
    out = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION), _pack_str(kind)]
    out.append(struct.pack("<I", len(weights.shapes)))
    for name, shape in weights.shapes.items():
        out.append(_pack_str(name))
        out.append(struct.pack("<I", len(shape)) + struct.pack(f"<{len(shape)}Q", *shape))
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    out.append(struct.pack("<Q", len(meta)) + meta)
    out.append(weights.flat.astype("<f8").tobytes())
    return b"".join(out)


def _checkpoint_parts(raw):
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError("not a QTNN checkpoint file")
    try:
        (version,) = struct.unpack_from("<I", raw, 4)
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        kind, pos = _unpack_str(raw, 8)
        (n_arrays,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        shapes = {}
        for _ in range(n_arrays):
            name, pos = _unpack_str(raw, pos)
            (ndim,) = struct.unpack_from("<I", raw, pos)
            shapes[name] = tuple(struct.unpack_from(f"<{ndim}Q", raw, pos + 4))
            pos += 4 + 8 * ndim
        (n_meta,) = struct.unpack_from("<Q", raw, pos)
        metadata = json.loads(raw[pos + 8 : pos + 8 + n_meta].decode("utf-8"))
        pos += 8 + n_meta
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"truncated or malformed checkpoint header: {exc}") from exc
    return version, kind, shapes, metadata, pos


def read_checkpoint(path):
    """Returns ``(kind, ModelWeights, metadata)``."""
    raw = Path(path).read_bytes()
    _, kind, shapes, metadata, pos = _checkpoint_parts(raw)
    weights = ModelWeights(shapes)
    if len(raw) - pos != 8 * len(weights):
        raise FormatError("checkpoint weight block has the wrong length")
    weights.flat[:] = np.frombuffer(raw, dtype="<f8", offset=pos)
    return kind, weights, metadata


def write_checkpoint(path, kind, weights, metadata):
    Path(path).write_bytes(checkpoint_bytes(kind, weights, metadata))


def save_model(path, model, extra=None):
    """Write a corrector or selector/reconstructor model with its hyperparameters."""
    from .models.corrector import CorrectorModel

    if isinstance(model, CorrectorModel):
        meta = {
            "variant": model.variant.value,
            "n_qubits": model.n_qubits,
            "m": model.m,
            "hidden": list(model.hidden),
            "subset": None if model.subset is None else list(model.subset),
            "step": model.step,
        }
    else:
        meta = {
            "mode": model.mode.value,
            "n_qubits": model.n_qubits,
            "hidden_size": model.hidden_size,
            "n_layers": model.n_layers,
            "step": model.step,
        }
    if extra:
        meta["run"] = extra
    write_checkpoint(path, model.kind, model.weights, meta)


def load_model(path):
    from .models.corrector import CHECKPOINT_KIND as CORR_KINDS, CorrectorModel, CorrectorVariant
    from .models.lstm import CHECKPOINT_KIND as LSTM_KINDS, SelectionMode, SelectorReconstructor

    kind, weights, meta = read_checkpoint(path)
    if kind in CORR_KINDS.values():
        variant = CorrectorVariant(meta["variant"])
        if CORR_KINDS[variant] != kind:
            raise FormatError(f"kind {kind} does not match variant {variant.value}")
        subset = None if meta["subset"] is None else tuple(meta["subset"])
        model = CorrectorModel(variant, meta["n_qubits"], meta["m"], weights, tuple(meta["hidden"]), subset, meta["step"])
        if model.sizes != CorrectorModel._sizes(variant, model.n_qubits, model.m, model.hidden):
            raise FormatError("corrector layer sizes are inconsistent")
        return model
    if kind in LSTM_KINDS.values():
        mode = SelectionMode(meta["mode"])
        if LSTM_KINDS[mode] != kind:
            raise FormatError(f"kind {kind} does not match mode {mode.value}")
        return SelectorReconstructor(mode, meta["n_qubits"], weights, meta["hidden_size"], meta["n_layers"], meta["step"])
    raise FormatError(f"unknown model kind {kind!r}")


def inspect_file(path):
    """Header summary of a dataset or checkpoint file as a dict."""
    raw = Path(path).read_bytes()
    if raw[:4] == DATASET_MAGIC:
        return _dataset_header(raw)
    if raw[:4] == CHECKPOINT_MAGIC:
        version, kind, shapes, metadata, pos = _checkpoint_parts(raw)
        return {
            "format": "QTNN",
            "version": version,
            "kind": kind,
            "shapes": {k: list(v) for k, v in shapes.items()},
            "n_parameters": (len(raw) - pos) // 8,
            "metadata": metadata,
        }
    raise FormatError("unknown file type")


# ------------------------------------------------------------------- configs


def parse_config(text, schema):
    """Parse ``key = value`` lines against ``schema`` (key -> (type, default)).

    ``#`` starts a comment. ``schema_version`` must be present and match.
    Unknown keys raise :class:`InvalidSpec`. Returns a dict with defaults
    filled in.
    """
    values, version = {}, None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidSpec(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "schema_version":
            version = int(val)
            continue
        if key not in schema:
            raise InvalidSpec(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(schema[key][0], val, key)
    if version != CONFIG_SCHEMA_VERSION:
        raise InvalidSpec(f"schema_version must be {CONFIG_SCHEMA_VERSION}, got {version}")
    return {k: values.get(k, default) for k, (_, default) in schema.items()}


def _convert(typ, val, key):
    try:
        if typ is bool:
            if val.lower() not in ("true", "false", "1", "0"):
                raise ValueError(val)
            return val.lower() in ("true", "1")
        if typ is tuple:
            return tuple(int(v) for v in val.replace(",", " ").split())
        return typ(val)
    except ValueError as exc:
        raise InvalidSpec(f"bad value for {key}: {val!r}") from exc


def format_config(values):
    lines = [f"schema_version = {CONFIG_SCHEMA_VERSION}"]
    for key, val in values.items():
        if isinstance(val, (tuple, list)):
            val = ",".join(str(v) for v in val)
        elif isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
