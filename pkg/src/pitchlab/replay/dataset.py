"""RAED dataset files: replayable trajectory slices shared across experiments.

Layout (little-endian)::

    b"RAED"  u16 version  u32 length  u32 lstm_width  u64 schema_hash
    u16 id_len  utf-8 experiment id
    records: u32 payload_len  u32 crc32(payload)  payload

The payload is every slice field's raw bytes in schema order.  Records all
have the same size for a given schema, so a corrupt record is skipped by
advancing one record and counted in ``DatasetFile.skipped``.
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import IncompatibleDatasetError
from .slices import TrajectorySlice, schema_hash, slice_fields

MAGIC = b"RAED"
VERSION = 1
_HEAD = struct.Struct("<4sHIIQH")
_FRAME = struct.Struct("<II")


def _payload_size(length, lstm_width) -> int:
    return sum(int(np.prod(s)) * np.dtype(d).itemsize for s, d in slice_fields(length, lstm_width).values())


def _encode(slc: TrajectorySlice, fields) -> bytes:
    return b"".join(np.ascontiguousarray(slc.arrays[k], dtype=np.dtype(d).newbyteorder("<")).tobytes() for k, (s, d) in fields.items())


class DatasetWriter:
    """Streaming RAED writer; the file appears atomically on ``close``."""

    def __init__(self, path, length: int, lstm_width: int = 64, experiment_id: str = ""):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.length, self.lstm_width = int(length), int(lstm_width)
        self.fields = slice_fields(length, lstm_width)
        self._tmp = self.path.with_name(self.path.name + ".tmp")
        self._fh = open(self._tmp, "wb")
        eid = experiment_id.encode()
        self._fh.write(_HEAD.pack(MAGIC, VERSION, self.length, self.lstm_width, schema_hash(length, lstm_width), len(eid)))
        self._fh.write(eid)
        self.count = 0

    def write(self, slc: TrajectorySlice) -> None:
        slc.validate(self.length, self.lstm_width)
        payload = _encode(slc, self.fields)
        self._fh.write(_FRAME.pack(len(payload), zlib.crc32(payload)))
        self._fh.write(payload)
        self.count += 1

    def close(self) -> int:
        if self._fh is not None:
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._fh.close()
            self._fh = None
            os.replace(self._tmp, self.path)
        return self.count

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def export_dataset(source, path, length: int | None = None, lstm_width: int | None = None, experiment_id: str = "") -> int:
    """Write a replay buffer (its quiesced snapshot) or an iterable of slices; returns the record count."""
    if hasattr(source, "snapshot"):
        length = length or source.length
        lstm_width = lstm_width or source.lstm_width
        slices = source.snapshot()
    else:
        slices = list(source)
        if slices:
            length = length or slices[0].length
            lstm_width = lstm_width or slices[0].lstm_width
    if length is None:
        raise ValueError("slice length unknown for an empty export")
    with DatasetWriter(path, length, lstm_width or 64, experiment_id) as w:
        for s in slices:
            w.write(s)
    return w.count


class DatasetFile:
    """Read-only, memory-mapped view of the valid records of a RAED file."""

    def __init__(self, path, length: int | None = None, lstm_width: int | None = None):
        self.path = Path(path)
        if not self.path.is_file():
            raise IncompatibleDatasetError(f"dataset not found: {self.path}")
        raw = np.memmap(self.path, dtype=np.uint8, mode="r") if self.path.stat().st_size else np.zeros(0, np.uint8)
        if raw.size < _HEAD.size:
            raise IncompatibleDatasetError(f"not a dataset file (too short): {self.path}")
        magic, version, L, W, shash, id_len = _HEAD.unpack(raw[: _HEAD.size].tobytes())
        if magic != MAGIC:
            raise IncompatibleDatasetError(f"bad dataset magic in {self.path}")
        if version != VERSION:
            raise IncompatibleDatasetError(f"unsupported dataset version {version} in {self.path}")
        if shash != schema_hash(L, W):
            raise IncompatibleDatasetError(f"dataset schema hash does not match its header fields: {self.path}")
        if length is not None and L != length:
            raise IncompatibleDatasetError(f"dataset slice length {L} differs from expected {length}: {self.path}")
        if lstm_width is not None and W != lstm_width:
            raise IncompatibleDatasetError(f"dataset recurrent width {W} differs from expected {lstm_width}: {self.path}")
        self.length, self.lstm_width, self.schema = L, W, shash
        off = _HEAD.size
        self.experiment_id = raw[off : off + id_len].tobytes().decode("utf-8", errors="replace")
        off += id_len
        self.fields = slice_fields(L, W)
        psize = _payload_size(L, W)
        rsize = _FRAME.size + psize
        self._raw = raw
        self._offsets = []
        self.skipped = 0
        while off < raw.size:
            if off + rsize > raw.size:
                self.skipped += 1  # truncated tail
                break
            n, crc = _FRAME.unpack(raw[off : off + _FRAME.size].tobytes())
            body = raw[off + _FRAME.size : off + rsize]
            if n == psize and zlib.crc32(body) == crc:
                self._offsets.append(off + _FRAME.size)
            else:
                self.skipped += 1
            off += rsize

    def __len__(self):
        return len(self._offsets)

    def __getitem__(self, i) -> TrajectorySlice:
        start = self._offsets[i]
        arrays = {}
        for k, (shape, dt) in self.fields.items():
            dt = np.dtype(dt)
            n = int(np.prod(shape)) * dt.itemsize
            arrays[k] = np.frombuffer(self._raw[start : start + n].tobytes(), dtype=dt.newbyteorder("<")).astype(dt).reshape(shape)
            start += n
        return TrajectorySlice(arrays)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def import_dataset(path, length: int | None = None, lstm_width: int | None = None) -> DatasetFile:
    return DatasetFile(path, length, lstm_width)
