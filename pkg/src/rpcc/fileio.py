"""On-disk formats: binary tensors, block masks, score vectors, run configs and CSV tables.

Tensor file layout (all little-endian)::

    offset  size      field
    0       4         magic b"TNSR"
    4       2         version (u16) = 1
    6       2         order N (u16)
    8       8*N       dims (u64 each)
    8+8N    8*prod    payload, float64, column-major (mode 1 fastest)
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import fields
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .state import Hyperparams

MAGIC = b"TNSR"
VERSION = 1
_HEADER = struct.Struct("<4sHH")


class FormatError(ValueError):
    """Malformed file contents."""


class ConfigError(ValueError):
    """Invalid run configuration."""


def tensor_to_bytes(X: np.ndarray) -> bytes:
    X = np.asarray(X, dtype="<f8")
    if X.ndim < 1 or X.ndim > 0xFFFF:
        raise ValueError(f"cannot store a tensor of order {X.ndim}")
    head = _HEADER.pack(MAGIC, VERSION, X.ndim) + struct.pack(f"<{X.ndim}Q", *X.shape)
    return head + X.tobytes(order="F")


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated header: expected at least {_HEADER.size} bytes, got {len(buf)}")
    magic, version, order = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte offset 0, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at byte offset 4")
    if order < 1:
        raise FormatError("tensor order 0 at byte offset 6")
    dims_end = _HEADER.size + 8 * order
    if len(buf) < dims_end:
        raise FormatError(f"truncated dims: expected {dims_end} header bytes, got {len(buf)}")
    dims = struct.unpack_from(f"<{order}Q", buf, _HEADER.size)
    for n, d in enumerate(dims):
        if d < 1:
            raise FormatError(f"dimension {n} is zero at byte offset {_HEADER.size + 8 * n}")
    expected = 8 * math.prod(dims)
    actual = len(buf) - dims_end
    if actual != expected:
        raise FormatError(
            f"payload size mismatch at byte offset {dims_end}: expected {expected} bytes, got {actual}"
        )
    data = np.frombuffer(buf, dtype="<f8", offset=dims_end)
    return data.reshape(dims, order="F").astype(np.float64)


def write_tensor(path: str | Path, X: np.ndarray) -> None:
    Path(path).write_bytes(tensor_to_bytes(X))


def read_tensor(path: str | Path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


def write_mask(path: str | Path, support: Iterable[int]) -> None:
    text = "".join(f"{k}\n" for k in sorted(int(k) for k in support))
    Path(path).write_text(text)


def read_mask(path: str | Path, K: int | None = None) -> list[int]:
    """Read a newline-delimited list of 0-based block indices."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            k = int(line)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: not an integer block index: {line!r}") from None
        if k < 0 or (K is not None and k >= K):
            raise FormatError(f"{path}:{lineno}: block index {k} out of range [0, {K})")
        out.append(k)
    return out


def write_scores(path: str | Path, scores: Sequence[float]) -> None:
    Path(path).write_text("".join(f"{float(s)!r}\n" for s in scores))


def read_scores(path: str | Path) -> np.ndarray:
    vals = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            vals.append(float(line))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: not a number: {line!r}") from None
    return np.array(vals)


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h, "")) for h in header])


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


# -- key = value configs ---------------------------------------------------


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        out[key] = value
    return out


def int_list(value: str) -> tuple[int, ...]:
    items = [v for v in value.replace(",", " ").split() if v]
    if not items:
        raise ValueError("empty list")
    return tuple(int(v) for v in items)


def float_list(value: str) -> tuple[float, ...]:
    items = [v for v in value.replace(",", " ").split() if v]
    return tuple(float(v) for v in items)


def boolean(value: str) -> bool:
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


_HP_TYPES: dict[str, Callable[[str], Any]] = {
    f.name: (int if f.type in ("int", int) else float) for f in fields(Hyperparams)
}


def _convert(raw: Mapping[str, str], schema: Mapping[str, Callable[[str], Any]]) -> dict[str, Any]:
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown config key '{key}'")
        try:
            out[key] = schema[key](value)
        except ValueError as exc:
            raise ConfigError(f"config key '{key}': {exc}") from None
    return out


def _hyperparams(values: Mapping[str, Any], **overrides) -> Hyperparams:
    kw = {k: v for k, v in values.items() if k in _HP_TYPES}
    kw.update(overrides)
    try:
        return Hyperparams(**kw)
    except ValueError as exc:
        key = str(exc).split(" ", 1)[0]
        raise ConfigError(f"config key '{key}': {exc}") from None


def _require(values: Mapping[str, Any], *keys: str) -> None:
    for key in keys:
        if key not in values:
            raise ConfigError(f"missing required config key '{key}'")


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


DECOMPOSE_KEYS = {**_HP_TYPES, "input": str, "output_dir": str, "block_dims": int_list}


def load_decompose_config(path: str | Path) -> tuple[dict[str, Any], Hyperparams]:
    """Config for ``rpcc decompose``; paths are relative to the config file."""
    path = Path(path)
    values = _convert(parse_kv(path.read_text(), str(path)), DECOMPOSE_KEYS)
    _require(values, "input", "output_dir", "block_dims", "rank")
    hp = _hyperparams(values)
    values["input"] = _resolve(path.parent, values["input"])
    values["output_dir"] = _resolve(path.parent, values["output_dir"])
    return values, hp


SYNTH_KEYS = {
    **{k: v for k, v in _HP_TYPES.items() if k != "rank"},
    "output": str,
    "dims": int_list,
    "block_dims": int_list,
    "R0": int_list,
    "rho": float_list,
    "trials": int,
    "rank_factor": int,
    "timing": boolean,
}


def load_synth_config(path: str | Path) -> tuple[dict[str, Any], Hyperparams]:
    """Config for ``rpcc synth-bench``. ``seed`` seeds the whole grid."""
    path = Path(path)
    values = _convert(parse_kv(path.read_text(), str(path)), SYNTH_KEYS)
    _require(values, "output", "R0", "rho", "trials")
    values.setdefault("dims", (20, 20, 20, 20))
    values.setdefault("block_dims", (4, 4, 4, 4))
    values.setdefault("rank_factor", 2)
    values.setdefault("timing", True)
    if values["trials"] < 1:
        raise ConfigError("config key 'trials': must be >= 1")
    for rho in values["rho"]:
        if not 0.0 <= rho <= 1.0:
            raise ConfigError(f"config key 'rho': {rho} outside [0, 1]")
    if len(values["dims"]) != len(values["block_dims"]):
        raise ConfigError("config key 'block_dims': length differs from 'dims'")
    for i, j in zip(values["dims"], values["block_dims"]):
        if j < 1 or i % j:
            raise ConfigError(f"config key 'block_dims': {j} does not divide dimension {i}")
    hp = _hyperparams(values, rank=1)
    values["output"] = _resolve(path.parent, values["output"])
    return values, hp
