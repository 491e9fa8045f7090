"""Append-only CSV of per-step learner scalars."""

from __future__ import annotations

import csv
from pathlib import Path


class MetricsWriter:
    """Writes one row per learner step.

    The header is fixed by the first row (or read back from an existing file
    when resuming); later rows with unknown keys are rejected so a file never
    mixes layouts.  Floats are written with ``repr`` so runs compare exactly.
    """

    def __init__(self, path, resume: bool = True):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.columns: list | None = None
        if resume and self.path.is_file() and self.path.stat().st_size:
            with open(self.path, newline="") as fh:
                self.columns = next(csv.reader(fh))
        elif self.path.exists():
            self.path.unlink()

    def write(self, row: dict) -> None:
        if self.columns is None:
            self.columns = list(row)
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(self.columns)
        extra = set(row) - set(self.columns)
        if extra:
            raise ValueError(f"metrics row has columns not in the header: {sorted(extra)}")
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow([_fmt(row.get(c, "")) for c in self.columns])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_metrics(path) -> list[dict]:
    """Rows as dicts of floats (non-numeric cells stay strings)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = float(v)
                except (TypeError, ValueError):
                    parsed[k] = v
            out.append(parsed)
    return out
