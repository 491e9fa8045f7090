"""On-disk policy snapshots and the first-quarter opponent curriculum."""

from __future__ import annotations

import dataclasses
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import NetworkConfig
from ..diffnet import ParameterSet, PolicyNetwork, load_psnap, save_psnap
from ..errors import CurriculumError, SnapshotLoadError

_NAME = re.compile(r"^snap_(\d{6})\.psnap$")


@dataclass(frozen=True)
class PolicySnapshot:
    index: int
    learner_step: int
    stage: str
    path: Path
    metadata: dict = field(default_factory=dict)

    def load(self) -> ParameterSet:
        params, _ = load_psnap(self.path)
        return params

    @property
    def observation(self) -> str:
        return self.metadata.get("observation", "vision")

    def network(self, base: NetworkConfig | None = None) -> PolicyNetwork:
        cfg = network_config_from_meta(self.metadata, base)
        return PolicyNetwork(cfg, self.observation)


def network_config_from_meta(meta: dict, base: NetworkConfig | None = None) -> NetworkConfig:
    cfg = base or NetworkConfig()
    net = meta.get("network", {})
    known = {f.name for f in dataclasses.fields(cfg)}
    return dataclasses.replace(cfg, **{k: (tuple(v) if isinstance(v, list) else v) for k, v in net.items() if k in known})


def snapshot_metadata(network_config: NetworkConfig, observation: str | None = None, **extra) -> dict:
    net = {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(network_config).items()}
    return {"observation": observation or network_config.observation, "network": net, **extra}


class SnapshotStore:
    """Append-only directory of ``snap_NNNNNN.psnap`` files, indices from 1.

    One writer (the learner), many readers.  Files are never rewritten, so a
    snapshot read twice is bit-identical.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._snaps: list[PolicySnapshot] = []
        self.refresh()

    def refresh(self) -> None:
        found = []
        for p in self.directory.iterdir():
            m = _NAME.match(p.name)
            if m:
                found.append((int(m.group(1)), p))
        snaps = []
        for idx, p in sorted(found):
            _, meta = load_psnap(p)
            snaps.append(PolicySnapshot(idx, int(meta.get("learner_step", 0)), meta.get("stage", ""), p, meta))
        with self._lock:
            self._snaps = snaps

    def __len__(self):
        return len(self._snaps)

    def __iter__(self):
        return iter(list(self._snaps))

    @property
    def indices(self) -> list:
        return [s.index for s in self._snaps]

    def write(self, params: ParameterSet, learner_step: int, stage: str, metadata: dict | None = None) -> PolicySnapshot:
        with self._lock:
            index = self._snaps[-1].index + 1 if self._snaps else 1
            meta = dict(metadata or {})
            meta.update(index=index, learner_step=int(learner_step), stage=stage)
            path = self.directory / f"snap_{index:06d}.psnap"
            if path.exists():
                raise SnapshotLoadError(f"snapshot already exists: {path}")
            save_psnap(path, params, meta)
            snap = PolicySnapshot(index, int(learner_step), stage, path, meta)
            self._snaps.append(snap)
        latest = self.directory / "latest"
        latest.write_text(path.name + "\n")
        return snap

    def get(self, index: int) -> PolicySnapshot:
        for s in self._snaps:
            if s.index == index:
                return s
        raise SnapshotLoadError(f"no snapshot with index {index} in {self.directory}")

    def latest(self) -> PolicySnapshot:
        if not self._snaps:
            raise CurriculumError(f"snapshot store is empty: {self.directory}")
        return self._snaps[-1]

    def first_quarter(self) -> list:
        """Snapshots with index <= floor(count / 4); all of them when count < 4."""
        snaps = list(self._snaps)
        if len(snaps) < 4:
            return snaps
        cut = len(snaps) // 4
        return [s for s in snaps if s.index <= cut]


def sample_opponent(store: SnapshotStore, rng: np.random.Generator) -> PolicySnapshot:
    pool = store.first_quarter()
    if not pool:
        raise CurriculumError(f"cannot sample an opponent from an empty store: {store.directory}")
    return pool[int(rng.integers(len(pool)))]


def resolve_snapshot(path) -> Path:
    """Accept a .psnap file, a snapshots directory, or ``snapshots/latest``."""
    p = Path(path)
    if p.is_file() and p.suffix == ".psnap":
        return p
    if p.name == "latest" and p.parent.is_dir():
        if p.is_file():
            return p.parent / p.read_text().strip()
        p = p.parent
    if p.is_dir():
        marker = p / "latest"
        if marker.is_file():
            return p / marker.read_text().strip()
        snaps = sorted(q for q in p.iterdir() if _NAME.match(q.name))
        if snaps:
            return snaps[-1]
    raise SnapshotLoadError(f"policy snapshot not found: {p}")


def load_snapshot(path) -> PolicySnapshot:
    """Open any snapshot reference accepted by :func:`resolve_snapshot`."""
    p = resolve_snapshot(path)
    _, meta = load_psnap(p)
    return PolicySnapshot(int(meta.get("index", 0)), int(meta.get("learner_step", 0)), meta.get("stage", ""), p, meta)
