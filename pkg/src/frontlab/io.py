"""Persistence: CSV traces, binary field dumps with JSON sidecars, SVG plots, manifests."""

from __future__ import annotations

import hashlib
import json
import math
import queue
import threading
from html import escape
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CSV_FMT = ".16e"  # 17 significant digits


class PersistenceError(OSError):
    pass


def _first_nan(a: np.ndarray):
    bad = ~np.isfinite(a)
    if bad.any():
        return tuple(int(i) for i in np.argwhere(bad)[0])
    return None


def write_csv(path, header: Sequence[str], rows) -> Path:
    """Write rows of numbers with a header row; refuses non-finite values."""
    path = Path(path)
    arr = np.asarray(rows, dtype=float)
    if arr.size == 0:
        arr = arr.reshape(0, len(header))
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[1] != len(header):
        raise ValueError(f"{len(header)} columns in header but rows have {arr.shape[1]}")
    bad = _first_nan(arr)
    if bad is not None:
        raise ValueError(f"non-finite value at row {bad[0]}, column {bad[1]} ({header[bad[1]]})")
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in arr:
                fh.write(",".join(format(x, CSV_FMT) for x in row) + "\n")
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(x) for x in line.split(",")] for line in fh if line.strip()]
    return header, np.asarray(rows, dtype=float).reshape(len(rows), len(header))


def write_field_dump(path, array, *, origin=(0.0, 0.0), spacing=(1.0, 1.0), t: float = 0.0,
                     extra: dict | None = None) -> Path:
    """Flat little-endian float64 binary plus a ``.json`` sidecar describing it."""
    path = Path(path)
    a = np.ascontiguousarray(array, dtype="<f8")
    bad = _first_nan(a)
    if bad is not None:
        raise ValueError(f"non-finite value at index {bad}")
    header = {
        "shape": list(a.shape),
        "dtype": "<f8",
        "order": "C",
        "origin": [float(o) for o in origin],
        "spacing": [float(s) for s in spacing],
        "time": float(t),
    }
    if extra:
        header.update(extra)
    try:
        path.write_bytes(a.tobytes())
        _sidecar(path).write_text(json.dumps(header, indent=2, sort_keys=True))
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc
    return path


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def read_field_dump(path):
    path = Path(path)
    header = json.loads(_sidecar(path).read_text())
    data = np.frombuffer(path.read_bytes(), dtype=header["dtype"]).reshape(header["shape"])
    return data.copy(), header


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")


# --- SVG ----------------------------------------------------------------------------

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def write_svg(path, series: Iterable[tuple[str, Sequence[float], Sequence[float]]], *, title: str = "",
              xlabel: str = "x", ylabel: str = "y", logx: bool = False, logy: bool = False,
              colors: Sequence[str] | None = None, width: int = 640, height: int = 420) -> Path:
    """Line plot of ``(label, xs, ys)`` series with labelled axes."""
    path = Path(path)
    series = [(lab, np.asarray(xs, float), np.asarray(ys, float)) for lab, xs, ys in series]
    for lab, xs, ys in series:
        if xs.shape != ys.shape:
            raise ValueError(f"series {lab!r}: x and y lengths differ")
        for arr in (xs, ys):
            bad = _first_nan(arr)
            if bad is not None:
                raise ValueError(f"series {lab!r}: non-finite value at index {bad[0]}")

    def tx(a):
        return np.log10(a) if logx else a

    def ty(a):
        return np.log10(a) if logy else a

    xs_all = np.concatenate([tx(s[1]) for s in series]) if series else np.array([0.0, 1.0])
    ys_all = np.concatenate([ty(s[2]) for s in series]) if series else np.array([0.0, 1.0])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0
    ml, mr, mt, mb = 70, 20, 30, 50
    pw, ph = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for xv in _ticks(x0, x1):
        lab = f"1e{xv:.2g}" if logx else f"{xv:.3g}"
        out.append(f'<text x="{px(xv):.1f}" y="{mt + ph + 16}" font-size="11" text-anchor="middle">{lab}</text>')
    for yv in _ticks(y0, y1):
        lab = f"1e{yv:.2g}" if logy else f"{yv:.3g}"
        out.append(f'<text x="{ml - 6}" y="{py(yv) + 4:.1f}" font-size="11" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 10}" font-size="13" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{ml + pw / 2}" y="18" font-size="14" text-anchor="middle">{escape(title)}</text>')
    colors = list(colors) if colors else _PALETTE
    for i, (lab, xs, ys) in enumerate(series):
        if xs.size == 0:
            continue
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(tx(xs), ty(ys)))
        c = colors[i % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"><title>{escape(lab)}</title></polyline>')
    out.append("</svg>")
    try:
        path.write_text("\n".join(out))
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc
    return path


def time_gradient(n: int) -> list[str]:
    """Blue-to-red colours for ``n`` curves ordered in time."""
    cols = []
    for i in range(n):
        f = i / max(n - 1, 1)
        cols.append(f"#{int(255 * f):02x}30{int(255 * (1 - f)):02x}")
    return cols


# --- background writer --------------------------------------------------------------


class SnapshotWriter:
    """Writes snapshots on a worker thread fed by a bounded queue.

    ``put`` blocks when the queue is full, so the producer is paused rather than
    data dropped. Arrays must not be mutated after being handed over.
    """

    def __init__(self, out_dir, maxsize: int = 8):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._q: queue.Queue = queue.Queue(maxsize=maxsize)
        self._error: BaseException | None = None
        self._road_rows: list[np.ndarray] = []
        self.files: list[Path] = []
        self._thread = threading.Thread(target=self._run, name="frontlab-writer", daemon=True)
        self._thread.start()

    def _run(self):
        while True:
            item = self._q.get()
            try:
                if item is None:
                    return
                if self._error is None:
                    self._handle(*item)
            except BaseException as exc:  # surfaced on close
                self._error = exc
            finally:
                self._q.task_done()

    def _handle(self, kind, name, payload):
        if kind == "road":
            t, x, u = payload
            self._road_rows.append(np.column_stack([np.full_like(x, t), x, u]))
        elif kind == "field":
            arr, meta = payload
            self.files.append(write_field_dump(self.out_dir / name, arr, **meta))
        elif kind == "csv":
            header, rows = payload
            self.files.append(write_csv(self.out_dir / name, header, rows))

    def put_road(self, t, x, u):
        self._q.put(("road", None, (t, x, u)))

    def put_field(self, name, arr, **meta):
        self._q.put(("field", name, (arr, meta)))

    def put_csv(self, name, header, rows):
        self._q.put(("csv", name, (header, rows)))

    def close(self, truncated: bool = False) -> list[Path]:
        self._q.put(None)
        self._thread.join()
        if self._error is not None:
            raise PersistenceError(str(self._error)) from self._error
        rows = np.concatenate(self._road_rows) if self._road_rows else np.empty((0, 3))
        self.files.insert(0, write_csv(self.out_dir / "road_profiles.csv", ["t", "x", "u"], rows))
        if truncated:
            marker = self.out_dir / "TRUNCATED"
            marker.write_text("run stopped before t_final; outputs are partial\n")
            self.files.append(marker)
        return self.files


def file_index(paths: Iterable[Path], root: Path) -> list[dict]:
    return [{"path": str(Path(p).relative_to(root)), "sha256": sha256_file(p)} for p in sorted(paths)]


def finite_or_none(x: float):
    return None if x is None or not math.isfinite(x) else float(x)
