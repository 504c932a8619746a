"""Finite index grids: 1-D interval grids, 2-D sheet grids, and integer prefixes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INTERVAL_1D = "interval-1d"
SHEET_2D = "sheet-2d"
DISCRETE_N = "discrete-n"


@dataclass(frozen=True)
class TimeGrid:
    """Ordered finite set of index points.

    kind        one of interval-1d, sheet-2d, discrete-n
    points      strictly increasing values: reals in [0, horizon] (interval-1d),
                lexicographically increasing pairs in [0, horizon]^2 (sheet-2d),
                or integers 1..m (discrete-n)
    horizon     right endpoint T of the interval / square (ignored for discrete-n)
    """

    kind: str
    points: tuple = field(default=())
    horizon: float = 1.0

    def __post_init__(self):
        if self.kind not in (INTERVAL_1D, SHEET_2D, DISCRETE_N):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if len(self.points) == 0:
            raise ValueError("grid must be nonempty")
        pts = tuple(self._canonical(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        for a, b in zip(pts, pts[1:]):
            if not a < b:
                raise ValueError("grid points must be strictly increasing")
        if self.kind == INTERVAL_1D:
            if self.horizon <= 0:
                raise ValueError("horizon must be positive")
            if pts[0] < 0 or pts[-1] > self.horizon:
                raise ValueError("points must lie in [0, horizon]")
        elif self.kind == SHEET_2D:
            if self.horizon <= 0:
                raise ValueError("horizon must be positive")
            for s, t in pts:
                if not (0 <= s <= self.horizon and 0 <= t <= self.horizon):
                    raise ValueError("points must lie in [0, horizon]^2")
        else:
            for p in pts:
                if p < 1:
                    raise ValueError("discrete-n points must be integers >= 1")

    def _canonical(self, p):
        if self.kind == INTERVAL_1D:
            return float(p)
        if self.kind == SHEET_2D:
            s, t = p
            return (float(s), float(t))
        return int(p)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def index_of(self, p):
        return self.points.index(self._canonical(p))

    def as_array(self) -> np.ndarray:
        """Points as a float array, shape (m,) or (m, 2)."""
        return np.asarray(self.points, dtype=float)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "points": [list(p) if self.kind == SHEET_2D else p for p in self.points]}
        if self.kind != DISCRETE_N:
            out["horizon"] = self.horizon
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TimeGrid":
        kind = obj["kind"]
        points = obj["points"]
        if kind == SHEET_2D:
            points = tuple(tuple(p) for p in points)
        else:
            points = tuple(points)
        return cls(kind=kind, points=points, horizon=obj.get("horizon", 1.0))


def uniform_grid(m: int, horizon: float = 1.0, start: float = 0.0) -> TimeGrid:
    """m equally spaced points from start to horizon inclusive."""
    pts = np.linspace(start, horizon, m)
    return TimeGrid(INTERVAL_1D, tuple(float(t) for t in pts), horizon)


def dyadic_grid(depth: int, horizon: float = 1.0) -> TimeGrid:
    """Grid {horizon * 2^-j : j = depth..0}, accumulating at zero."""
    pts = tuple(horizon * 2.0 ** (-j) for j in range(depth, -1, -1))
    return TimeGrid(INTERVAL_1D, pts, horizon)


def product_sheet_grid(m: int, horizon: float = 1.0) -> TimeGrid:
    axis = np.linspace(0.0, horizon, m)
    pts = tuple((float(s), float(t)) for s in axis for t in axis)
    return TimeGrid(SHEET_2D, pts, horizon)


def discrete_grid(m: int) -> TimeGrid:
    return TimeGrid(DISCRETE_N, tuple(range(1, m + 1)))
