"""Cubications of a box, their skeletons, and dual skeletons.

All geometry lives on the half-lattice: a cubication of radius ``eta`` has
cube centers at ``eta * k`` for integer vectors ``k`` of fixed parity per
axis, cube boundary planes at the complementary parity.  A face is identified
by its integer center vector (in units of ``eta``) plus the set of axes it
spans; identity and deduplication are exact integer operations, never float
comparisons.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .boxes import Box
from .errors import DimOutOfRange, EmptySkeleton, NonConformingBox, NotASubset

_REL_TOL = 1e-12


@dataclass(frozen=True)
class Face:
    """A d-dimensional face: center ``eta * key``, spanning ``free_axes``."""

    key: tuple[int, ...]
    free_axes: frozenset[int]
    eta: float

    @property
    def dim(self) -> int:
        return len(self.free_axes)

    @property
    def center(self) -> np.ndarray:
        return self.eta * np.asarray(self.key, dtype=float)

    def corners(self) -> list[tuple[int, ...]]:
        """Integer keys of the 2^dim corner points."""
        axes = sorted(self.free_axes)
        out = []
        for signs in itertools.product((-1, 1), repeat=len(axes)):
            k = list(self.key)
            for ax, s in zip(axes, signs):
                k[ax] += s
            out.append(tuple(k))
        return out

    def box(self, margin: float = 0.0) -> Box:
        """Sup-norm neighborhood of the face as a box."""
        m = len(self.key)
        radius = np.array([self.eta if i in self.free_axes else 0.0 for i in range(m)])
        return Box(self.center - radius - margin, self.center + radius + margin)


class Skeleton:
    """A set of same-dimension faces of (or dual to) a cubication."""

    def __init__(self, dim: int, faces: list[Face], parent: "Cubication",
                 is_dual: bool = False, source_dim: int | None = None):
        self.dim = dim
        self.faces = faces
        self.parent = parent
        self.is_dual = is_dual
        self.source_dim = source_dim
        if is_dual and source_dim is not None:
            assert dim == parent.m - source_dim - 1
        for f in faces:
            assert f.dim == dim

    def __len__(self) -> int:
        return len(self.faces)

    def __iter__(self):
        return iter(self.faces)

    @property
    def eta(self) -> float:
        return self.parent.eta

    def _grouped(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Faces grouped by free-axis pattern: (free mask (m,), centers (F, m))."""
        groups: dict[frozenset[int], list[Face]] = {}
        for f in self.faces:
            groups.setdefault(f.free_axes, []).append(f)
        out = []
        m = self.parent.m
        for axes, faces in groups.items():
            mask = np.zeros(m, dtype=bool)
            mask[list(axes)] = True
            centers = np.stack([f.center for f in faces])
            out.append((mask, centers))
        return out

    def dist(self, x: np.ndarray, norm: str = "sup") -> np.ndarray:
        """Distance from points (..., m) to the union of faces; exact."""
        if not self.faces:
            raise EmptySkeleton("distance to an empty skeleton")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        best = np.full(x.shape[0], np.inf)
        eta = self.eta
        for mask, centers in self._grouped():
            # per-axis distance to the face slab, chunked over faces
            for start in range(0, centers.shape[0], 4096):
                c = centers[start:start + 4096]
                d = np.abs(x[:, None, :] - c[None, :, :])
                d = np.where(mask[None, None, :], np.maximum(d - eta, 0.0), d)
                if norm == "sup":
                    vals = np.max(d, axis=-1)
                elif norm == "euclidean":
                    vals = np.sqrt(np.sum(d * d, axis=-1))
                else:
                    raise ValueError(f"unknown norm {norm!r}")
                best = np.minimum(best, np.min(vals, axis=-1))
        return best

    def contains_points(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return self.dist(x, "sup") <= tol

    def to_csv(self, path) -> None:
        """One face per row: dim, free-axis bitmask, center coordinates."""
        with open(path, "w", newline="\n") as fh:
            m = self.parent.m
            cols = ",".join(f"c{i}" for i in range(m))
            fh.write(f"dim,free_mask,{cols}\n")
            for f in sorted(self.faces, key=lambda f: f.key):
                mask = sum(1 << i for i in f.free_axes)
                coords = ",".join("%.12g" % v for v in f.center)
                fh.write(f"{f.dim},{mask},{coords}\n")


class Cubication:
    """Complete decomposition of a box into cubes of radius eta."""

    def __init__(self, m: int, eta: float, center_keys: np.ndarray, bounds: Box):
        self.m = m
        self.eta = eta
        self.center_keys = np.asarray(center_keys, dtype=np.int64).reshape(-1, m)
        self.bounds = bounds
        self.key_set = {tuple(k) for k in self.center_keys.tolist()}

    def __len__(self) -> int:
        return self.center_keys.shape[0]

    @property
    def centers(self) -> np.ndarray:
        return self.eta * self.center_keys.astype(float)

    @property
    def parity(self) -> np.ndarray:
        """Per-axis parity of cube-center keys (shared by all cubes)."""
        if len(self) == 0:
            return np.zeros(self.m, dtype=np.int64)
        return np.abs(self.center_keys[0]) % 2

    def cubes(self) -> Skeleton:
        """The cubes themselves, as the m-skeleton."""
        all_axes = frozenset(range(self.m))
        faces = [Face(tuple(k), all_axes, self.eta) for k in self.center_keys.tolist()]
        return Skeleton(self.m, faces, self, is_dual=False)

    def cube_boxes(self, margin: float = 0.0) -> list[Box]:
        return [Box.from_center_radius(c, self.eta + margin) for c in self.centers]

    def union_dist(self, x: np.ndarray) -> np.ndarray:
        """Sup-norm distance from points to the union of cubes."""
        return self.cubes().dist(x, "sup")

    def union_indicator(self, margin: float = 0.0):
        """Indicator of (union of cubes) + Q_margin, for masked regions."""
        return lambda pts: self.union_dist(pts) <= margin

    def subset(self, keys: set[tuple[int, ...]]) -> "Cubication":
        keep = [k for k in self.center_keys.tolist() if tuple(k) in keys]
        arr = np.asarray(keep, dtype=np.int64).reshape(-1, self.m)
        return Cubication(self.m, self.eta, arr, self.bounds)

    def volume(self) -> float:
        return len(self) * (2.0 * self.eta) ** self.m


def build_cubication(box: Box, eta: float) -> Cubication:
    """Complete cubication covering ``box`` with cubes of radius ``eta``."""
    if eta <= 0:
        raise NonConformingBox("eta must be positive")
    half = box.half_widths
    counts = half / eta
    rounded = np.rint(counts)
    if np.any(np.abs(counts - rounded) > _REL_TOL * np.maximum(1.0, np.abs(counts))):
        raise NonConformingBox(
            f"box half-widths {half} are not integer multiples of eta={eta}"
        )
    # cube centers start half a cube in from the lower corner
    first = box.lo / eta + 1.0
    first_keys = np.rint(first).astype(np.int64)
    if np.any(np.abs(first - first_keys) > 1e-9):
        raise NonConformingBox("box corners do not sit on the eta lattice")
    n_axis = rounded.astype(int)
    axes = [first_keys[i] + 2 * np.arange(n_axis[i]) for i in range(box.m)]
    mesh = np.meshgrid(*axes, indexing="ij")
    keys = np.stack([g.ravel() for g in mesh], axis=-1)
    return Cubication(box.m, eta, keys, box)


def skeleton(K: Cubication, ell: int) -> Skeleton:
    """All distinct ell-faces of all cubes of K."""
    if not 0 <= ell <= K.m:
        raise DimOutOfRange(f"ell={ell} outside [0, {K.m}]")
    m = K.m
    seen: dict[tuple[tuple[int, ...], frozenset[int]], Face] = {}
    for k in K.center_keys.tolist():
        for fixed in itertools.combinations(range(m), m - ell):
            free = frozenset(range(m)) - frozenset(fixed)
            for signs in itertools.product((-1, 1), repeat=m - ell):
                kk = list(k)
                for ax, s in zip(fixed, signs):
                    kk[ax] += s
                ident = (tuple(kk), free)
                if ident not in seen:
                    seen[ident] = Face(tuple(kk), free, K.eta)
    return Skeleton(ell, list(seen.values()), K, is_dual=False)


def dual_skeleton(K: Cubication, ell: int) -> Skeleton:
    """Dual skeleton of the ell-skeleton: dimension m - ell - 1.

    Faces are translates sigma + a - x, where sigma runs over the
    (m-ell-1)-faces, x over the corners of sigma, and a over centers of cubes
    of K having x as a vertex.
    """
    if not 0 <= ell <= K.m - 1:
        raise DimOutOfRange(f"ell={ell} outside [0, {K.m - 1}]")
    ell_star = K.m - ell - 1
    S = skeleton(K, ell_star)
    vertex_offsets = list(itertools.product((-1, 1), repeat=K.m))
    seen: dict[tuple[tuple[int, ...], frozenset[int]], Face] = {}
    for f in S.faces:
        for x in f.corners():
            for off in vertex_offsets:
                a = tuple(x[i] + off[i] for i in range(K.m))
                if a not in K.key_set:
                    continue
                shifted = tuple(f.key[i] + a[i] - x[i] for i in range(K.m))
                ident = (shifted, f.free_axes)
                if ident not in seen:
                    seen[ident] = Face(shifted, f.free_axes, K.eta)
    return Skeleton(ell_star, list(seen.values()), K, is_dual=True, source_dim=ell)


def dist_to_skeleton(S: Skeleton, x, norm: str = "sup"):
    """Exact distance to the union of faces; scalar in, scalar out."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    d = S.dist(np.atleast_2d(x), norm=norm)
    return float(d[0]) if single else d


def in_neighborhood(S: Skeleton, rho_eta: float, x) -> np.ndarray | bool:
    """True iff the sup-norm distance to S is < rho_eta (open neighborhood)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    res = S.dist(np.atleast_2d(x), "sup") < rho_eta
    return bool(res[0]) if single else res


def adjacent_closure(K: Cubication, E: Cubication) -> Cubication:
    """All cubes of K whose closed cube meets a closed cube of E."""
    if not E.key_set <= K.key_set:
        raise NotASubset("E is not a sub-cubication of K")
    offsets = np.array(list(itertools.product((-2, 0, 2), repeat=K.m)), dtype=np.int64)
    keys: set[tuple[int, ...]] = set()
    for k in E.center_keys:
        for cand in (k[None, :] + offsets):
            t = tuple(cand.tolist())
            if t in K.key_set:
                keys.add(t)
    return K.subset(keys)
