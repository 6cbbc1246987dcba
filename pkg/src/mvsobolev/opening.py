"""Opening maps: collapse a field onto face-parallel values near a skeleton.

Around each d-face the block map squeezes the orthogonal coordinates onto the
face's translated center inside the inner rectangle and is the identity
outside the support rectangle, so the composed field becomes exactly constant
on the orthogonal fibers.  The translation of each block is selected by
minimizing quadrature-backed energy densities over a deterministic candidate
set in a small ball, which realizes the averaging argument constructively.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .boxes import Box
from .cubication import Cubication, Face, Skeleton
from .errors import BadParameterChain, DomainTooSmall
from .fields import Field, TransformMap, compose, compose_transforms
from .glue import GluedLevel
from .norms import QuadratureSpec
from .profiles import plateau


@dataclass
class OpeningParams:
    """Strictly interleaved radius chain rho = rho_l < r_lo_l < r_hi_l < ... < 2 rho."""

    rho: float
    ell: int
    rho_seq: list[float] = field(default_factory=list)     # rho_d, d = 0..ell
    r_lo_seq: list[float] = field(default_factory=list)
    r_hi_seq: list[float] = field(default_factory=list)
    lambda_factor: float = 0.45
    n_candidates: int = 5

    def __post_init__(self):
        if not 0 < self.rho < 0.5:
            raise BadParameterChain("rho must lie in (0, 1/2)")
        L = self.ell + 1
        if not self.rho_seq:
            # ascending ladder of 3L values with equal gaps inside [rho, 2rho)
            step = self.rho / (3 * L)
            ladder = [self.rho + i * step for i in range(3 * L)]
            # level d reads its triple at height ell - d
            self.rho_seq = [ladder[3 * (self.ell - d)] for d in range(L)]
            self.r_lo_seq = [ladder[3 * (self.ell - d) + 1] for d in range(L)]
            self.r_hi_seq = [ladder[3 * (self.ell - d) + 2] for d in range(L)]
        chain = []
        for d in range(self.ell, -1, -1):
            chain += [self.rho_seq[d], self.r_lo_seq[d], self.r_hi_seq[d]]
        chain.append(2 * self.rho)
        if not all(a < b for a, b in zip(chain, chain[1:])):
            raise BadParameterChain(f"chain not strictly increasing: {chain}")

    def level(self, d: int) -> tuple[float, float, float, float]:
        """(rho_lo, r_lo, r_hi, rho_hi) for the level-d block."""
        rho_hi = 2 * self.rho if d == 0 else self.rho_seq[d - 1]
        return self.rho_seq[d], self.r_lo_seq[d], self.r_hi_seq[d], rho_hi

    def lam(self, d: int) -> float:
        lo, rlo, rhi, hi = self.level(d)
        return self.lambda_factor * min((rlo - lo) / 2, (rhi - rlo) / 2, (hi - rhi) / 2)


class _BlockOpening:
    """Local-coordinate opening block; x' along the face, x'' orthogonal."""

    def __init__(self, d: int, m: int, eta: float, rho_lo: float, r_lo: float,
                 r_hi: float, rho_hi: float, lam: float, a: np.ndarray):
        if not 0 < rho_lo < r_lo < r_hi < rho_hi <= 1:
            raise BadParameterChain(
                f"need 0 < {rho_lo} < {r_lo} < {r_hi} < {rho_hi} <= 1"
            )
        if np.linalg.norm(a) > lam * eta + 1e-15:
            raise BadParameterChain("translation outside the admissible ball")
        self.d, self.m, self.eta = d, m, eta
        self.rho_lo, self.r_lo, self.r_hi, self.rho_hi = rho_lo, r_lo, r_hi, rho_hi
        self.lam = lam
        self.a = np.asarray(a, dtype=float)

    def _phi(self, x_over_eta: np.ndarray) -> np.ndarray:
        """Scalar profile: 0 on the inner rectangle + ball margin, 1 past the
        support rectangle - margin; separable product of coordinate plateaus."""
        d, lam = self.d, self.lam
        inner = np.ones(x_over_eta.shape[0])
        if d > 0:
            stop = plateau(np.abs(x_over_eta[:, :d]),
                           1 - self.rho_hi + lam, 1 - self.r_hi - lam)
            inner = inner * np.prod(stop, axis=-1)
        core = plateau(np.abs(x_over_eta[:, d:]), self.rho_lo + lam, self.r_lo - lam)
        inner = inner * np.prod(core, axis=-1)
        return 1.0 - inner

    def __call__(self, x: np.ndarray) -> np.ndarray:
        z = x - self.a
        phi = self._phi(z / self.eta)
        out = z.copy()
        out[:, self.d:] = phi[:, None] * z[:, self.d:]
        return out + self.a

    def support_box(self) -> Box:
        """Support rectangle (contains the moving set for any admissible a)."""
        r = np.concatenate([
            np.full(self.d, (1 - self.r_hi) * self.eta),
            np.full(self.m - self.d, self.r_lo * self.eta),
        ])
        return Box(-r, r)

    def selection_boxes(self) -> tuple[Box, Box]:
        """(integration rectangle, detector rectangle) for translation choice."""
        q3 = np.concatenate([
            np.full(self.d, (1 - self.r_lo) * self.eta),
            np.full(self.m - self.d, self.r_hi * self.eta),
        ])
        q4 = np.concatenate([
            np.full(self.d, (1 - self.rho_lo) * self.eta),
            np.full(self.m - self.d, self.rho_hi * self.eta),
        ])
        return Box(-q3, q3), Box(-q4, q4)


def build_block_opening(d: int, eta: float, rho_lo: float, r_lo: float,
                        r_hi: float, rho_hi: float, a, m: int | None = None,
                        lam: float | None = None) -> TransformMap:
    """Standalone opening block around the face Q^d_eta x {0}^(m-d)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if m is None:
        m = a.size
    if lam is None:
        lam = 0.45 * min((r_lo - rho_lo) / 2, (r_hi - r_lo) / 2, (rho_hi - r_hi) / 2)
    blk = _BlockOpening(d, m, eta, rho_lo, r_lo, r_hi, rho_hi, lam, a)
    support = blk.support_box()
    return TransformMap(m, blk, Box(support.lo + a, support.hi + a),
                        name=f"open-block-d{d}", fd_scale=eta)


@dataclass
class FractionalDetector:
    """Quadrature-backed energy density x -> integral of the kernel against u."""

    density: object  # callable (n, m) -> (n,)
    total: float
    name: str = "detector"


def fractional_detector(u: Field, Omega: Box, sigma: float, p: float,
                        spec: QuadratureSpec) -> FractionalDetector:
    """Pointwise fractional energy density over Omega; integrates back to the
    seminorm^p up to quadrature error."""
    n_grid = min(spec.grid_n, 12 if u.m >= 3 else 24)
    ypts, yw = Omega.grid(n_grid)
    yvals = u(ypts)
    m = u.m
    excl = spec.exclusion_radius
    if excl is None:
        excl = 0.5 * float(np.max(Omega.hi - Omega.lo)) / n_grid

    def density(x: np.ndarray) -> np.ndarray:
        xv = u(x)
        out = np.empty(x.shape[0])
        for start in range(0, x.shape[0], 2048):
            sl = slice(start, min(start + 2048, x.shape[0]))
            diff = x[sl, None, :] - ypts[None, :, :]
            dist = np.sqrt(np.sum(diff * diff, axis=-1))
            du = xv[sl, None, :] - yvals[None, :, :]
            dup = np.sum(du * du, axis=-1) ** (p / 2.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                f = np.where(dist >= excl, dup / dist ** (m + sigma * p), 0.0)
            out[sl] = np.sum(f, axis=-1) * yw
        return out

    total = float(np.sum(density(ypts) * yw))
    return FractionalDetector(density, total, name=f"frac({u.name})")


def lp_detector(u: Field, Omega: Box, p: float, spec: QuadratureSpec) -> FractionalDetector:
    """|u|^p density; the zero-order member of the detector family."""

    def density(x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(u(x), axis=-1) ** p

    pts, w = Omega.grid(min(spec.grid_n, 16))
    total = float(np.sum(density(pts) * w))
    return FractionalDetector(density, total, name=f"lp({u.name})")


def _candidate_translations(m: int, radius: float, n: int) -> np.ndarray:
    """Deterministic low-discrepancy points in the ball, center first."""
    out = [np.zeros(m)]
    alphas = np.array([0.6180339887498949, 0.7548776662466927,
                       0.8191725133961645, 0.8566748838545029][:m])
    i = 1
    while len(out) < n and i <= 100 * n:
        frac = np.mod(0.5 + i * alphas, 1.0)
        pt = (2 * frac - 1) * radius
        if np.linalg.norm(pt) < radius:
            out.append(pt)
        i += 1
    return np.stack(out[:n])


def select_translation(block_ctor, detectors: list[FractionalDetector],
                       omega: Box, radius: float, n_candidates: int = 5,
                       grid_n: int = 8) -> tuple[np.ndarray, dict]:
    """Argmin of the summed normalized detector pullbacks over candidates.

    Returns the winning translation and a report with the measured averaging
    constant per detector: pullback integral over omega divided by
    (|omega + ball| / |ball|) times the detector total.
    """
    cands = _candidate_translations(omega.m, radius, max(1, n_candidates))
    pts, w = omega.grid(grid_n)
    scores = []
    per_detector = []
    for a in cands:
        Phi = block_ctor(a)
        mapped = Phi(pts)
        score = 0.0
        raw = []
        for det in detectors:
            val = float(np.sum(det.density(mapped)) * w)
            raw.append(val)
            score += val / max(det.total, 1e-300)
        scores.append(score)
        per_detector.append(raw)
    # a candidate that drags the block onto a singular value scores nan: lose
    best = int(np.argmin(np.nan_to_num(np.asarray(scores), nan=np.inf)))
    m = omega.m
    ball_vol = math.pi ** (m / 2) / math.gamma(m / 2 + 1) * radius**m
    enlarged = float(np.prod(omega.hi - omega.lo + 2 * radius))
    measured = [
        per_detector[best][i] * ball_vol / (enlarged * max(det.total, 1e-300))
        for i, det in enumerate(detectors)
    ]
    return cands[best], {
        "candidates": cands,
        "scores": scores,
        "best_index": best,
        "measured_constants": measured,
        "volume_ratio": enlarged / ball_vol,
    }


def subfaces(S: Skeleton, d: int) -> list[Face]:
    """All distinct d-faces of the faces of S (d <= S.dim)."""
    seen: dict[tuple[tuple[int, ...], frozenset[int]], Face] = {}
    for f in S.faces:
        axes = sorted(f.free_axes)
        for keep in itertools.combinations(axes, d):
            drop = [ax for ax in axes if ax not in keep]
            for signs in itertools.product((-1, 1), repeat=len(drop)):
                k = list(f.key)
                for ax, s in zip(drop, signs):
                    k[ax] += s
                ident = (tuple(k), frozenset(keep))
                if ident not in seen:
                    seen[ident] = Face(tuple(k), frozenset(keep), f.eta)
    return list(seen.values())


def build_opening(U_ell: Skeleton, K: Cubication, eta: float,
                  params: OpeningParams, u: Field,
                  sigma: float = 0.5, p: float = 2.0,
                  spec: QuadratureSpec | None = None) -> TransformMap:
    """Global opening over the skeleton, built level by level.

    Level d collapses the orthogonal fibers over every d-face; lower levels
    are applied afterwards (outermost), so the composition is constant on all
    fibers of the smallest radius.  Each block's translation is selected
    against the field composed with the levels built so far.
    """
    if spec is None:
        spec = QuadratureSpec(grid_n=16)
    ell = U_ell.dim
    margin = 2 * params.rho * eta
    for f in U_ell.faces:
        b = f.box(margin)
        if not (np.all(b.lo >= u.domain.lo - 1e-12)
                and np.all(b.hi <= u.domain.hi + 1e-12)):
            raise DomainTooSmall("skeleton neighborhood leaves the field domain")

    current = u
    total: TransformMap | None = None
    for d in range(0, ell + 1):
        rho_lo, r_lo, r_hi, rho_hi = params.level(d)
        lam = params.lam(d)
        faces = subfaces(U_ell, d)
        proto = _BlockOpening(d, K.m, eta, rho_lo, r_lo, r_hi, rho_hi,
                              lam, np.zeros(K.m))
        q3_local, q4_local = proto.selection_boxes()
        blocks = []
        for f in faces:
            perm = np.array(sorted(f.free_axes)
                            + [j for j in range(K.m) if j not in f.free_axes])
            inv = np.argsort(perm)

            def make(a_local, _f=f, _perm=perm, _inv=inv):
                blk = _BlockOpening(d, K.m, eta, rho_lo, r_lo, r_hi, rho_hi,
                                    lam, a_local)

                def fn(x, _blk=blk):
                    local = (x - _f.center)[:, _perm]
                    return _blk(local)[:, _inv] + _f.center

                sup = blk.support_box()
                return TransformMap(K.m, fn,
                                    Box(sup.lo[_inv] + _f.center,
                                        sup.hi[_inv] + _f.center),
                                    fd_scale=eta)

            q3 = Box(q3_local.lo[inv] + f.center, q3_local.hi[inv] + f.center)
            q4 = Box(q4_local.lo[inv] + f.center, q4_local.hi[inv] + f.center)
            dets = [
                fractional_detector(current, q4, sigma, p, spec),
                lp_detector(current, q4, p, spec),
            ]
            a_best, _ = select_translation(make, dets, q3, lam * eta,
                                           params.n_candidates)
            blocks.append(_BlockOpening(d, K.m, eta, rho_lo, r_lo, r_hi,
                                        rho_hi, lam, a_best))
        glued = GluedLevel(K, faces, blocks,
                           own_free=(1 - r_hi) * eta, own_fixed=r_lo * eta)
        boxes = [f.box(2 * params.rho * eta) for f in faces]
        lo = np.min(np.stack([b.lo for b in boxes]), axis=0)
        hi = np.max(np.stack([b.hi for b in boxes]), axis=0)
        level_map = TransformMap(K.m, glued, Box(lo, hi),
                                 name=f"open-level-{d}", fd_scale=eta)
        current = compose(current, level_map, check_domain=False)
        total = level_map if total is None else compose_transforms(total, level_map)
    if total is None:
        total = TransformMap(K.m, lambda x: x, Box.cube(0.0, K.m),
                             name="open-identity", fd_scale=eta)
    return total


def oscillation_estimate(v: Field, cube: Box, spec: QuadratureSpec,
                         grid_n: int = 6) -> float:
    """Double average of |v(x) - v(y)| over the cube, by all-pairs quadrature."""
    pts, w = cube.grid(grid_n)
    vals = v(pts)
    diff = vals[:, None, :] - vals[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    vol = cube.volume()
    return float(np.sum(w * w * d) / (vol * vol))
