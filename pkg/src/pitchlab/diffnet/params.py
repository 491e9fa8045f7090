"""Named parameter collections and the PSNAP checkpoint format.

PSNAP layout (little endian)::

    bytes 0-4   b"PSNAP"
    u16         format version (1)
    u32         metadata length M, then M bytes of UTF-8 JSON
    u32         parameter count P
    P times     u16 name length, UTF-8 name            (name table)
    P times     u8 ndim, ndim x u32 dims, float32 data  (payloads, name-table order)
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..errors import NetworkConfigError, SnapshotLoadError
from .tensor import Tensor

PSNAP_MAGIC = b"PSNAP"
PSNAP_VERSION = 1


class ParameterSet:
    """Ordered mapping of unique names to float arrays plus a version counter.

    Shapes are fixed once a name is registered.  ``version`` is bumped by the
    optimizer on every update so published copies can be told apart.
    """

    def __init__(self, arrays=None, version: int = 0):
        self._arrays: OrderedDict[str, np.ndarray] = OrderedDict()
        self.version = version
        for k, v in (arrays or {}).items():
            self.add(k, v)

    def add(self, name: str, value) -> None:
        if name in self._arrays:
            raise NetworkConfigError(f"duplicate parameter name: {name}")
        self._arrays[name] = np.array(value, dtype=np.float32)

    def __getitem__(self, name) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name, value) -> None:
        value = np.asarray(value)
        if name not in self._arrays:
            raise KeyError(name)
        if value.shape != self._arrays[name].shape:
            raise NetworkConfigError(f"shape change for {name}: {self._arrays[name].shape} -> {value.shape}")
        self._arrays[name] = value.astype(self._arrays[name].dtype, copy=False)

    def __contains__(self, name):
        return name in self._arrays

    def __iter__(self):
        return iter(self._arrays)

    def __len__(self):
        return len(self._arrays)

    def keys(self):
        return self._arrays.keys()

    def items(self):
        return self._arrays.items()

    def values(self):
        return self._arrays.values()

    def copy(self) -> "ParameterSet":
        out = ParameterSet(version=self.version)
        for k, v in self._arrays.items():
            out._arrays[k] = v.copy()
        return out

    def astype(self, dtype) -> "ParameterSet":
        out = ParameterSet(version=self.version)
        for k, v in self._arrays.items():
            out._arrays[k] = v.astype(dtype)
        return out

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self._arrays.values()))

    def tensors(self, requires_grad=True) -> dict:
        return {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in self._arrays.items()}

    def checksum(self) -> str:
        h = hashlib.sha256()
        for k, v in self._arrays.items():
            h.update(k.encode())
            h.update(np.ascontiguousarray(v).tobytes())
        return h.hexdigest()

    def subset(self, prefix: str) -> "ParameterSet":
        return ParameterSet({k: v for k, v in self._arrays.items() if k.startswith(prefix)}, self.version)

    def update_from(self, other: "ParameterSet") -> None:
        for k, v in other.items():
            self[k] = v.copy()

    def equal(self, other: "ParameterSet") -> bool:
        return list(self.keys()) == list(other.keys()) and all(
            np.array_equal(self[k], other[k]) for k in self.keys()
        )


def save_psnap(path, params: ParameterSet, metadata: dict | None = None) -> Path:
    """Write ``params`` (as float32) atomically via a temp file and rename."""
    path = Path(path)
    meta = json.dumps(metadata or {}, sort_keys=True).encode()
    chunks = [PSNAP_MAGIC, struct.pack("<HI", PSNAP_VERSION, len(meta)), meta, struct.pack("<I", len(params))]
    for name in params:
        raw = name.encode()
        chunks.append(struct.pack("<H", len(raw)) + raw)
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        chunks.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)
    return path


def load_psnap(path) -> tuple[ParameterSet, dict]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise SnapshotLoadError(f"cannot read snapshot {path}: {exc.strerror}") from exc
    try:
        if blob[:5] != PSNAP_MAGIC:
            raise SnapshotLoadError(f"not a PSNAP file: {path}")
        version, mlen = struct.unpack_from("<HI", blob, 5)
        if version != PSNAP_VERSION:
            raise SnapshotLoadError(f"unsupported PSNAP version {version}: {path}")
        off = 11
        meta = json.loads(blob[off : off + mlen].decode())
        off += mlen
        (count,) = struct.unpack_from("<I", blob, off)
        off += 4
        names = []
        for _ in range(count):
            (n,) = struct.unpack_from("<H", blob, off)
            off += 2
            names.append(blob[off : off + n].decode())
            off += n
        params = ParameterSet()
        for name in names:
            (ndim,) = struct.unpack_from("<B", blob, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, off)
            off += 4 * ndim
            size = int(np.prod(shape))
            arr = np.frombuffer(blob, "<f4", size, off).reshape(shape)
            off += 4 * size
            params.add(name, arr)
        if off != len(blob):
            raise SnapshotLoadError(f"trailing bytes in snapshot: {path}")
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise SnapshotLoadError(f"corrupt snapshot {path}: {exc}") from exc
    params.version = int(meta.get("version", 0))
    return params, meta
