"""Main and auxiliary samples for a sharp regression discontinuity design.

The main sample holds ``(x, w, y)`` rows from the RDD study, with treatment
``w = I(x >= c)``; a row exactly at the threshold counts as treated. The
auxiliary sample holds ``(u, x)`` rows from an independent study of the same
population. That the two samples share the joint law of ``(u, x)`` cannot be
checked from data and is assumed by every estimator in this package.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptySample, MissingColumn, NonFiniteValue, SharpDesignViolation


def treatment(x, threshold: float) -> np.ndarray:
    """Sharp assignment ``I(x >= threshold)`` as float 0/1."""
    return (np.asarray(x, dtype=float) >= threshold).astype(float)


def _as_column(values, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise NonFiniteValue(f"column {name!r} has a non-finite value at row {bad}")
    return arr


@dataclass(frozen=True, eq=False)
class MainSample:
    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    threshold: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise NonFiniteValue("threshold must be finite")
        x = _as_column(self.x, "x")
        w = _as_column(self.w, "w")
        y = _as_column(self.y, "y")
        if not (len(x) == len(w) == len(y)):
            raise ValueError("x, w, y must have equal length")
        if len(x) == 0:
            raise EmptySample("main sample is empty")
        bad = np.flatnonzero(w != treatment(x, self.threshold))
        if bad.size:
            i = int(bad[0])
            raise SharpDesignViolation(
                f"row {i}: w={w[i]:g} but I(x >= c) = {int(x[i] >= self.threshold)} "
                f"(x={x[i]!r}, c={self.threshold!r})"
            )
        for name, arr in (("x", x), ("w", w), ("y", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.x)

    def take(self, idx) -> MainSample:
        return MainSample(self.x[idx], self.w[idx], self.y[idx], self.threshold)


@dataclass(frozen=True, eq=False)
class AuxSample:
    u: np.ndarray
    x: np.ndarray
    threshold: float = 0.0
    w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise NonFiniteValue("threshold must be finite")
        u = _as_column(self.u, "u")
        x = _as_column(self.x, "x")
        if len(u) != len(x):
            raise ValueError("u and x must have equal length")
        if len(u) == 0:
            raise EmptySample("auxiliary sample is empty")
        w = treatment(x, self.threshold)
        for name, arr in (("u", u), ("x", x), ("w", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.u)

    def take(self, idx) -> AuxSample:
        return AuxSample(self.u[idx], self.x[idx], self.threshold)


def _read_columns(path, required: tuple[str, ...]) -> dict[str, list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptySample(f"{path}: file is empty")
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}; header is {header}")
        pos = {c: header.index(c) for c in required}
        cols: dict[str, list[str]] = {c: [] for c in required}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise MissingColumn(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for c, i in pos.items():
                cols[c].append(row[i])
    if not cols[required[0]]:
        raise EmptySample(f"{path}: no data rows")
    return cols


def _parse(cells: list[str], name: str, path) -> np.ndarray:
    out = np.empty(len(cells))
    for i, cell in enumerate(cells):
        try:
            out[i] = float(cell)
        except ValueError:
            raise NonFiniteValue(f"{path}: column {name!r} row {i}: cannot parse {cell!r}") from None
    return out


def load_main_csv(path, threshold: float) -> MainSample:
    """Read a ``x,w,y`` CSV and validate the sharp design at ``threshold``."""
    cols = _read_columns(path, ("x", "w", "y"))
    return MainSample(*(_parse(cols[c], c, path) for c in ("x", "w", "y")), threshold=float(threshold))


def load_aux_csv(path, threshold: float) -> AuxSample:
    cols = _read_columns(path, ("u", "x"))
    return AuxSample(_parse(cols["u"], "u", path), _parse(cols["x"], "x", path), threshold=float(threshold))


def _fmt(v: float) -> str:
    # repr round-trips float64 exactly
    return repr(float(v))


def write_main_csv(sample: MainSample, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["x", "w", "y"])
        for x, w, y in zip(sample.x, sample.w, sample.y):
            out.writerow([_fmt(x), int(w), _fmt(y)])


def write_aux_csv(sample: AuxSample, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["u", "x"])
        for u, x in zip(sample.u, sample.x):
            out.writerow([_fmt(u), _fmt(x)])


@dataclass(frozen=True)
class PositivityDiagnostic:
    """Per-bin counts of auxiliary rows below and at/above the threshold.

    ``labels`` are the u levels (binary or constant u) or the left bin edges;
    ``edges`` has one more entry than ``labels`` when u was binned.
    """

    labels: np.ndarray
    below: np.ndarray
    above: np.ndarray
    epsilon: float
    warning: bool
    edges: np.ndarray | None = None

    @property
    def one_sided(self) -> np.ndarray:
        occupied = (self.below + self.above) > 0
        return occupied & ((self.below == 0) | (self.above == 0))

    def rows(self) -> list[dict]:
        out = []
        for k, label in enumerate(self.labels):
            row = {"bin": k, "u": float(label)}
            if self.edges is not None:
                row["u_low"], row["u_high"] = float(self.edges[k]), float(self.edges[k + 1])
            row["n_below"], row["n_above"] = int(self.below[k]), int(self.above[k])
            out.append(row)
        return out


def positivity_diagnostic(aux: AuxSample, bins: int = 10) -> PositivityDiagnostic:
    """Empirical check that both sides of the threshold occur for every u.

    u with at most two distinct values is treated as discrete; otherwise it
    is cut into ``bins`` equal-width bins over its observed range. Empty bins
    are ignored when computing the minimum side share ``epsilon``.
    """
    if len(aux) == 0:
        raise EmptySample("auxiliary sample is empty")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    treated = aux.w.astype(bool)
    levels = np.unique(aux.u)
    edges = None
    if len(levels) <= 2:
        labels = levels
        idx = np.searchsorted(levels, aux.u)
    else:
        edges = np.linspace(levels[0], levels[-1], bins + 1)
        labels = edges[:-1]
        idx = np.clip(np.searchsorted(edges, aux.u, side="right") - 1, 0, bins - 1)
    k = len(labels)
    above = np.bincount(idx[treated], minlength=k)
    below = np.bincount(idx[~treated], minlength=k)
    total = above + below
    occupied = total > 0
    share = np.minimum(above[occupied], below[occupied]) / total[occupied]
    eps = float(share.min())
    warning = bool(np.any(share == 0))
    return PositivityDiagnostic(labels, below, above, eps, warning, edges)
