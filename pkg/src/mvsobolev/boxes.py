"""Axis-aligned boxes and sampling helpers used throughout the library."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRegion


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box given by lower and upper corners."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("lo/hi must be 1-d arrays of equal length")
        if np.any(self.hi < self.lo):
            raise ValueError("box upper corner below lower corner")

    @staticmethod
    def from_center_radius(center, radius) -> "Box":
        center = np.asarray(center, dtype=float)
        radius = np.asarray(radius, dtype=float) * np.ones_like(center)
        return Box(center - radius, center + radius)

    @staticmethod
    def cube(radius: float, m: int, center=None) -> "Box":
        c = np.zeros(m) if center is None else np.asarray(center, dtype=float)
        return Box.from_center_radius(c, radius)

    @property
    def m(self) -> int:
        return self.lo.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_widths(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Vectorized membership test for points of shape (..., m)."""
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)

    def dilate(self, margin: float) -> "Box":
        return Box(self.lo - margin, self.hi + margin)

    def intersect(self, other: "Box") -> "Box | None":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(hi <= lo):
            return None
        return Box(lo, hi)

    def grid(self, n_per_axis: int) -> tuple[np.ndarray, float]:
        """Midpoint tensor grid; returns (points (N, m), cell weight)."""
        if self.volume() <= 0:
            raise EmptyRegion("box has zero volume")
        axes = [
            self.lo[i] + (self.hi[i] - self.lo[i]) * (np.arange(n_per_axis) + 0.5) / n_per_axis
            for i in range(self.m)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1)
        weight = self.volume() / pts.shape[0]
        return pts, weight

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n uniform random points, shape (n, m)."""
        return self.lo + (self.hi - self.lo) * rng.random((n, self.m))


def bounding_box(boxes: list[Box]) -> Box:
    if not boxes:
        raise EmptyRegion("no boxes")
    lo = np.min(np.stack([b.lo for b in boxes]), axis=0)
    hi = np.max(np.stack([b.hi for b in boxes]), axis=0)
    return Box(lo, hi)


class MaskedRegion:
    """Bounding box plus an indicator; integrates over an implicit subset."""

    def __init__(self, box: Box, indicator, name: str = "masked"):
        self.box = box
        self.indicator = indicator
        self.name = name

    @property
    def m(self) -> int:
        return self.box.m

    def grid(self, n_per_axis: int) -> tuple[np.ndarray, float]:
        pts, w = self.box.grid(n_per_axis)
        keep = np.asarray(self.indicator(pts), dtype=bool)
        if not np.any(keep):
            raise EmptyRegion(f"indicator empty on grid for region {self.name!r}")
        return pts[keep], w

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Rejection-sample n points; volume must not be vanishingly small."""
        out = []
        got = 0
        for _ in range(200):
            pts = self.box.sample(max(n, 1024), rng)
            keep = np.asarray(self.indicator(pts), dtype=bool)
            sel = pts[keep]
            out.append(sel)
            got += sel.shape[0]
            if got >= n:
                break
        if got < n:
            raise EmptyRegion(f"rejection sampling starved for region {self.name!r}")
        return np.concatenate(out, axis=0)[:n]

    def volume(self, n_per_axis: int = 64) -> float:
        pts, w = self.box.grid(n_per_axis)
        keep = np.asarray(self.indicator(pts), dtype=bool)
        return float(np.sum(keep) * w)


Region = Box | list[Box] | MaskedRegion
