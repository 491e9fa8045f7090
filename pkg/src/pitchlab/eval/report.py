"""Report files: set-piece table CSV, SVG learning curves, trajectory traces and gaze histograms."""

from __future__ import annotations

import csv
import hashlib
import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from ..sim import PitchGeometry
from .setpieces import SET_PIECES, UNITS, write_trials_csv

TABLE_COLUMNS = ["metric", "policy", "mean", "stderr", "trials", "unit"]
CURVE_COLUMNS = ("running_return", "critic_loss", "policy_nll", "temperature", "kl_mean", "policy_std")
PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
MARGIN = (60, 20, 30, 45)  # left, right, top, bottom


# -- svg primitives -------------------------------------------------------------------


def _svg(width, height, title):
    root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width), height=str(height), viewBox=f"0 0 {width} {height}")
    ET.SubElement(root, "rect", x="0", y="0", width=str(width), height=str(height), fill="white")
    t = ET.SubElement(root, "text", x=str(width / 2), y="18", **{"text-anchor": "middle", "font-size": "14", "font-family": "sans-serif"})
    t.text = title
    return root


def _text(parent, x, y, s, size=11, anchor="middle", **kw):
    t = ET.SubElement(parent, "text", x=f"{x:.2f}", y=f"{y:.2f}", **{"text-anchor": anchor, "font-size": str(size), "font-family": "sans-serif"}, **kw)
    t.text = s


def _polyline(parent, pts, color, width=1.5, dash=None):
    attrs = {"points": " ".join(f"{x:.2f},{y:.2f}" for x, y in pts), "fill": "none", "stroke": color, "stroke-width": str(width)}
    if dash:
        attrs["stroke-dasharray"] = dash
    ET.SubElement(parent, "polyline", **attrs)


def _tostring(root) -> str:
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def _finite_range(values, pad=0.05):
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    if not len(v):
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - pad * span, hi + pad * span


class _Axes:
    def __init__(self, root, width, height, xr, yr, xlabel="", ylabel=""):
        l, r, t, b = MARGIN
        self.x0, self.x1, self.y0, self.y1 = l, width - r, height - b, t + 10
        self.xr, self.yr = xr, yr
        ET.SubElement(root, "rect", x=str(self.x0), y=str(self.y1), width=str(self.x1 - self.x0), height=str(self.y0 - self.y1), fill="none", stroke="black")
        for frac in (0.0, 0.5, 1.0):
            xv = xr[0] + frac * (xr[1] - xr[0])
            yv = yr[0] + frac * (yr[1] - yr[0])
            _text(root, self.sx(xv), self.y0 + 14, f"{xv:.3g}", 10)
            _text(root, self.x0 - 4, self.sy(yv) + 3, f"{yv:.3g}", 10, "end")
        _text(root, (self.x0 + self.x1) / 2, height - 8, xlabel)
        _text(root, 14, (self.y0 + self.y1) / 2, ylabel, transform=f"rotate(-90 14 {(self.y0 + self.y1) / 2:.2f})")

    def sx(self, x):
        return self.x0 + (x - self.xr[0]) / (self.xr[1] - self.xr[0]) * (self.x1 - self.x0)

    def sy(self, y):
        return self.y0 - (y - self.yr[0]) / (self.yr[1] - self.yr[0]) * (self.y0 - self.y1)


def _legend(root, labels, x, y):
    for i, label in enumerate(labels):
        yy = y + 14 * i
        ET.SubElement(root, "line", x1=str(x), y1=str(yy), x2=str(x + 18), y2=str(yy), stroke=PALETTE[i % len(PALETTE)], **{"stroke-width": "2"})
        _text(root, x + 22, yy + 4, str(label), 10, "start")


def svg_line_chart(series: dict, title: str, xlabel: str = "", ylabel: str = "", width: int = 640, height: int = 400) -> str:
    """``series`` maps a label to (xs, ys); non-finite points break the line."""
    root = _svg(width, height, title)
    xs_all = [x for xs, _ in series.values() for x in xs]
    ys_all = [y for _, ys in series.values() for y in ys]
    ax = _Axes(root, width, height, _finite_range(xs_all, 0.0), _finite_range(ys_all), xlabel, ylabel)
    for i, (label, (xs, ys)) in enumerate(series.items()):
        seg = []
        for x, y in zip(xs, ys):
            if np.isfinite(x) and np.isfinite(y):
                seg.append((ax.sx(x), ax.sy(y)))
            elif seg:
                _polyline(root, seg, PALETTE[i % len(PALETTE)])
                seg = []
        if seg:
            _polyline(root, seg, PALETTE[i % len(PALETTE)])
    if len(series) > 1:
        _legend(root, list(series), ax.x0 + 10, ax.y1 + 12)
    return _tostring(root)


def svg_traces(trials, pitch: PitchGeometry, title: str, width: int = 500, height: int = 420) -> str:
    """Top-down view: agent paths solid, ball paths dotted, one colour per trial."""
    root = _svg(width, height, title)
    hl, hw = pitch.length / 2, pitch.width / 2
    ax = _Axes(root, width, height, (-hl, hl), (-hw, hw), "x (m)", "y (m)")
    for sign, color in ((-1, "#d62728"), (1, "#1f77b4")):  # own goal red, target goal blue
        gx = ax.sx(sign * hl)
        ET.SubElement(root, "line", x1=f"{gx:.2f}", y1=f"{ax.sy(pitch.goal_width / 2):.2f}", x2=f"{gx:.2f}", y2=f"{ax.sy(-pitch.goal_width / 2):.2f}", stroke=color, **{"stroke-width": "5"})
    for i, t in enumerate(trials):
        c = PALETTE[i % len(PALETTE)]
        _polyline(root, [(ax.sx(x), ax.sy(y)) for x, y in t.agent_path], c)
        _polyline(root, [(ax.sx(x), ax.sy(y)) for x, y in t.ball_path], c, 1.0, "2,3")
    return _tostring(root)


def svg_histogram(edges, counts: dict, marker: float | None, title: str, xlabel: str = "angular distance (rad)", width: int = 640, height: int = 400) -> str:
    """Overlaid step histograms (normalised to densities) with an optional vertical marker."""
    root = _svg(width, height, title)
    dens = {}
    widths = np.diff(edges)
    for k, c in counts.items():
        c = np.asarray(c, dtype=float)
        dens[k] = c / max(c.sum(), 1.0) / widths
    ymax = max([float(d.max()) for d in dens.values()] + [1e-9])
    ax = _Axes(root, width, height, (float(edges[0]), float(edges[-1])), (0.0, ymax * 1.05), xlabel, "density")
    for i, (k, d) in enumerate(dens.items()):
        pts = [(ax.sx(edges[0]), ax.sy(0.0))]
        for j, v in enumerate(d):
            pts += [(ax.sx(edges[j]), ax.sy(v)), (ax.sx(edges[j + 1]), ax.sy(v))]
        pts.append((ax.sx(edges[-1]), ax.sy(0.0)))
        _polyline(root, pts, PALETTE[i % len(PALETTE)])
    if marker is not None:
        mx = ax.sx(marker)
        ET.SubElement(root, "line", x1=f"{mx:.2f}", y1=str(ax.y0), x2=f"{mx:.2f}", y2=str(ax.y1), stroke="black", **{"stroke-dasharray": "4,3"})
        _text(root, mx + 3, ax.y1 + 12, "FOV/2", 10, "start")
    _legend(root, list(dens), ax.x1 - 110, ax.y1 + 12)
    return _tostring(root)


# -- tables ---------------------------------------------------------------------------


def table_rows(results: dict) -> list:
    """{policy: {kind: SetPieceResult}} -> one row per (metric, policy) in set-piece order."""
    rows = []
    kinds = [k for k in SET_PIECES if any(k in r for r in results.values())]
    for kind in kinds:
        for policy, per_kind in results.items():
            if kind in per_kind:
                r = per_kind[kind]
                rows.append({"metric": kind, "policy": policy, "mean": r.mean, "stderr": r.stderr, "trials": r.trials, "unit": UNITS[kind]})
    return rows


def write_table_csv(path, results: dict) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, TABLE_COLUMNS)
        w.writeheader()
        for row in table_rows(results):
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return path


def write_gaze_csv(path, gaze: dict) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "condition", "episode", "step", "distance"])
        for policy, res in gaze.items():
            for cond in ("controlled", "fixed"):
                arr = getattr(res, cond)
                for e in range(arr.shape[0]):
                    for s in range(arr.shape[1]):
                        w.writerow([policy, cond, e, s, repr(float(arr[e, s]))])
    return path


# -- report ---------------------------------------------------------------------------


def _read_columns(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    out = {}
    for k in rows[0]:
        try:
            out[k] = np.array([float(r[k]) for r in rows])
        except (TypeError, ValueError):
            continue
    return out


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _slug(s) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in str(s))


def emit_report(results: dict, metrics_csv=None, out_dir="report", gaze=None, config=None, pitch: PitchGeometry | None = None) -> list:
    """Write every report artifact under ``out_dir`` and a manifest.json.

    ``results`` is {policy: {kind: SetPieceResult}}; ``metrics_csv`` a path or
    {label: path} of learner metrics files; ``gaze`` a GazeStudyResult or
    {policy: GazeStudyResult}.  Returns the written paths.  With no results
    and no gaze study only the header-only table and the manifest are written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if pitch is None:
        pitch = PitchGeometry.from_config(config.sim) if config is not None else PitchGeometry(5.0, 4.0, 1.6, 0.8)
    if gaze is not None and not isinstance(gaze, dict):
        gaze = {"policy": gaze}
    written = [write_table_csv(out / "table1.csv", results)]
    if results or gaze:
        written.append(write_trials_csv(out / "trials.csv", results))
        if metrics_csv is not None:
            sources = metrics_csv if isinstance(metrics_csv, dict) else {"run": metrics_csv}
            cols = {label: _read_columns(p) for label, p in sources.items() if Path(p).is_file()}
            for col in CURVE_COLUMNS:
                series = {label: (c["step"], c[col]) for label, c in cols.items() if col in c and "step" in c}
                if series:
                    p = out / f"curve_{col}.svg"
                    p.write_text(svg_line_chart(series, col.replace("_", " "), "learner step", col))
                    written.append(p)
            evals = {label: _read_columns(Path(p).with_name("eval.csv")) for label, p in sources.items() if Path(p).with_name("eval.csv").is_file()}
            series = {label: (c["step"], c["mean_return"]) for label, c in evals.items() if "mean_return" in c}
            if series:
                p = out / "curve_eval_return.svg"
                p.write_text(svg_line_chart(series, "evaluation return", "learner step", "mean return"))
                written.append(p)
        for policy, per_kind in results.items():
            for kind, r in per_kind.items():
                if r.traces:
                    p = out / f"traces_{_slug(policy)}_{kind}.svg"
                    p.write_text(svg_traces(r.traces[:10], pitch, f"{policy}: {kind}"))
                    written.append(p)
        for policy, g in (gaze or {}).items():
            edges, hc, hf = g.histograms()
            p = out / f"gaze_{_slug(policy)}.svg"
            p.write_text(svg_histogram(edges, {"head controlled": hc, "head fixed": hf}, g.fov_half, f"gaze distance: {policy}"))
            written.append(p)
        if gaze:
            written.append(write_gaze_csv(out / "gaze.csv", gaze))
    manifest = {
        "artifacts": {p.name: _sha256(p) for p in written},
        "config_digest": config.digest() if config is not None else None,
        "metrics": {},
    }
    if metrics_csv is not None:
        sources = metrics_csv if isinstance(metrics_csv, dict) else {"run": metrics_csv}
        manifest["metrics"] = {label: _sha256(p) for label, p in sources.items() if Path(p).is_file()}
    mp = out / "manifest.json"
    mp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    written.append(mp)
    return written
