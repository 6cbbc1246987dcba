"""Thickening: singular injective maps pushing cube interiors toward skeleta.

Each block acts in local face coordinates (face-parallel first): a radial
stretch of the parallel coordinates by a profile of the regularized distance
to the dual piece, composed with a ball-to-cube dilation.  The global map
composes glued levels by downward induction, leaving singularities exactly on
the dual skeleton.  All bounds are certified by sampling, never assumed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import Box
from .cubication import Cubication, Skeleton, dual_skeleton, skeleton
from .errors import BadDimension, InadmissibleProfile
from .fields import TransformMap, compose_transforms
from .glue import GluedLevel
from .profiles import DilationProfile, QNormStep, SingularRadialProfile


@dataclass
class ThickeningProfile:
    """Radii 0 < rho_lo < rho < rho_hi < 1 plus derived step/profile data."""

    d: int
    m: int
    eta: float
    rho_lo: float
    rho: float
    rho_hi: float
    b: float | None = None
    q: int | None = None

    def __post_init__(self):
        if not 0 < self.rho_lo < self.rho < self.rho_hi < 1:
            raise InadmissibleProfile(
                f"need 0 < {self.rho_lo} < {self.rho} < {self.rho_hi} < 1"
            )
        if not 1 <= self.d <= self.m:
            raise BadDimension(f"d={self.d} outside [1, {self.m}]")
        b_max = ((1 - self.rho) / (1 - self.rho_hi) - 1.0) * np.log(
            1.0 / (1 - self.rho_hi))
        if b_max <= 0:
            raise InadmissibleProfile("no admissible log-correction constant")
        if self.b is None:
            self.b = 0.5 * b_max
        elif not (1 - self.rho_hi) * (1 + self.b / np.log(1 / (1 - self.rho_hi))) \
                < (1 - self.rho):
            raise InadmissibleProfile("log-correction constant too large")
        self.theta = QNormStep(self.m - self.d, self.rho_lo, self.rho, q=self.q)
        self.phi = SingularRadialProfile(
            amp=1 - self.rho_hi, inner=1 - self.rho_hi, outer=1 - self.rho,
            b=self.b)
        self.b = self.phi.b  # the profile may have halved it for monotonicity

    @property
    def r1(self) -> float:
        return self.theta.r1

    @property
    def r2(self) -> float:
        return self.theta.r2


def theta_step(x_pp, profile: ThickeningProfile):
    """Monotone q-norm step: 0 on the inner cube, 1 past the outer cube."""
    return profile.theta(np.atleast_2d(np.asarray(x_pp, dtype=float)))


def zeta_thickening(x, profile: ThickeningProfile):
    """Regularized distance sqrt(|x'|^2 + eta^2 theta(x''/eta))."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d, eta = profile.d, profile.eta
    xp = x[:, :d]
    theta = profile.theta(x[:, d:] / eta)
    return np.sqrt(np.sum(xp * xp, axis=-1) + eta**2 * theta)


def phi_profile_thickening(r, profile: ThickeningProfile):
    """Stretch factor >= 1: closed form on the inner branch, 1 past the outer."""
    return profile.phi(np.asarray(r, dtype=float))


@dataclass
class SingularMap:
    """Transform with a dual-skeleton singular set and measured bounds."""

    transform: TransformMap
    zeta: object                       # callable (n, m) -> (n,)
    T: object                          # Skeleton or Box describing the singular set
    eta: float
    certified_bounds: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.transform(x)

    @property
    def m(self) -> int:
        return self.transform.m

    def singular_dist(self, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if isinstance(self.T, Box):
            excess = np.maximum(np.abs(pts - self.T.center) - self.T.half_widths, 0.0)
            return np.linalg.norm(excess, axis=-1)
        return self.T.dist(pts, "euclidean")


class _BlockThickening:
    """Local-coordinate block: stretch away from the orthogonal dual piece."""

    def __init__(self, profile: ThickeningProfile):
        self.p = profile
        try:
            self.dilate = DilationProfile(profile.d, anchor=1 - profile.rho_hi,
                                          outer=1 - profile.rho)
        except ValueError as e:
            raise InadmissibleProfile(str(e)) from e
        # complementary slab cutoff for the dilation: active on the core slab
        self.slab = profile.theta

    def stretch(self, x: np.ndarray) -> np.ndarray:
        """The radial stage alone (cylinder geometry)."""
        p = self.p
        zeta = zeta_thickening(x, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = phi_profile_thickening(zeta / p.eta, p)
        out = x.copy()
        out[:, :p.d] = lam[:, None] * x[:, :p.d]
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        p = self.p
        y = self.stretch(x)
        if self.dilate.trivial:
            return y
        h = self.dilate.factor(y[:, :p.d], p.eta)
        chi = 1.0 - self.slab(y[:, p.d:] / p.eta)
        factor = 1.0 + (h - 1.0) * chi
        out = y.copy()
        out[:, :p.d] = factor[:, None] * y[:, :p.d]
        return out

    def support_box(self) -> Box:
        p = self.p
        r = np.concatenate([
            np.full(p.d, (1 - p.rho) * p.eta),
            np.full(p.m - p.d, p.rho * p.eta),
        ])
        return Box(-r, r)

    def core_box(self) -> Box:
        """Q_2: the region fully evacuated from the inner rectangle Q_1."""
        p = self.p
        r = np.concatenate([
            np.full(p.d, (1 - p.rho) * p.eta),
            np.full(p.m - p.d, p.rho_lo * p.eta),
        ])
        return Box(-r, r)

    def inner_box(self) -> Box:
        """Q_1: values here come only from nearer the face after the block."""
        p = self.p
        r = np.concatenate([
            np.full(p.d, (1 - p.rho_hi) * p.eta),
            np.full(p.m - p.d, p.rho_lo * p.eta),
        ])
        return Box(-r, r)

    def singular_box(self) -> Box:
        p = self.p
        r = np.concatenate([np.zeros(p.d), np.full(p.m - p.d, p.rho * p.eta)])
        return Box(-r, r)


def build_block_thickening(d: int, eta: float, rho_lo: float, rho: float,
                           rho_hi: float, m: int | None = None) -> SingularMap:
    """Standalone thickening block around the face Q^d_eta x {0}^(m-d)."""
    m = d if m is None else m
    profile = ThickeningProfile(d=d, m=m, eta=eta, rho_lo=rho_lo, rho=rho,
                                rho_hi=rho_hi)
    blk = _BlockThickening(profile)
    tr = TransformMap(m, blk, blk.support_box(), name=f"thicken-d{d}",
                      fd_scale=eta)
    return SingularMap(transform=tr,
                       zeta=lambda x: zeta_thickening(x, profile),
                       T=blk.singular_box(), eta=eta)


def default_chain(ell: int, m: int, rho: float) -> tuple[list[float], list[float]]:
    """Interleaved radii 0 < rho_m < tau_(m-1) < ... < tau_ell < rho_ell = rho.

    Returns (rhos, taus) with rhos[i] = rho_(ell+i), taus[i] = tau_(ell+i).
    """
    n = 2 * (m - ell) + 1
    ladder = [rho * (j + 1) / n for j in range(n)]
    rhos = [ladder[n - 1 - 2 * i] for i in range(m - ell + 1)]   # rho_ell..rho_m
    taus = [ladder[n - 2 - 2 * i] for i in range(m - ell)]       # tau_ell..tau_(m-1)
    return rhos, taus


def build_thickening(U: Cubication, ell: int, eta: float, rho: float) -> SingularMap:
    """Global thickening of a sub-cubication toward its ell-skeleton.

    Downward induction over levels d = m..ell+1; level d glues blocks around
    every d-face of U with radii (rho_d, tau_(d-1), rho_(d-1)); the composite
    is singular exactly on the dual skeleton of the ell-skeleton of U.
    """
    m = U.m
    if not 0 <= ell <= m - 1:
        raise BadDimension(f"ell={ell} outside [0, {m - 1}]")
    rhos, taus = default_chain(ell, m, rho)
    T = dual_skeleton(U, ell)
    total: TransformMap | None = None
    for d in range(m, ell, -1):
        rho_lo = rhos[d - ell]          # rho_d
        rho_mid = taus[d - 1 - ell]     # tau_(d-1)
        rho_hi = rhos[d - 1 - ell]      # rho_(d-1)
        profile = ThickeningProfile(d=d, m=m, eta=eta, rho_lo=rho_lo,
                                    rho=rho_mid, rho_hi=rho_hi)
        faces = skeleton(U, d).faces if d < m else U.cubes().faces
        blk = _BlockThickening(profile)
        glued = GluedLevel(U, faces, [blk] * len(faces),
                           own_free=(1 - rho_mid) * eta,
                           own_fixed=rho_mid * eta)
        boxes = [f.box(rho * eta) for f in faces]
        lo = np.min(np.stack([b.lo for b in boxes]), axis=0)
        hi = np.max(np.stack([b.hi for b in boxes]), axis=0)
        level = TransformMap(m, glued, Box(lo, hi), name=f"thicken-level-{d}",
                             fd_scale=eta)
        # lower levels wrap outside: the top level acts first
        total = level if total is None else compose_transforms(level, total)
    assert total is not None
    total.singular_set = T

    def global_zeta(x):
        return T.dist(np.atleast_2d(np.asarray(x, dtype=float)), "euclidean")

    return SingularMap(transform=total, zeta=global_zeta, T=T, eta=eta)


def monotone_path(x, y, profile: ThickeningProfile, n_arc: int = 33) -> np.ndarray:
    """Polyline from x to y along which the regularized distance never drops
    below min(zeta(x), zeta(y)): norm-monotone arc plus radial move in each
    block.  The block order is chosen so the intermediate corner keeps both
    norms above the smaller endpoint (one of the two orders always does)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = profile.d
    q = profile.theta.q

    def arc(a, b, norm_fn):
        """Interpolate direction while the norm moves linearly (never below
        min of the endpoint norms)."""
        na, nb = norm_fn(a), norm_fn(b)
        if na < 1e-14 or nb < 1e-14:
            return [b]
        out = []
        for t in np.linspace(0.0, 1.0, n_arc)[1:]:
            v = (1 - t) * a + t * b
            nv = norm_fn(v)
            out.append(b if nv < 1e-14 else v * (((1 - t) * na + t * nb) / nv))
        return out

    e2 = lambda v: float(np.linalg.norm(v))
    eq = lambda v: float(np.sum(np.abs(v) ** q) ** (1.0 / q)) if v.size else 0.0

    def corner_zeta(parallel, orthogonal):
        z = np.concatenate([parallel, orthogonal])
        return float(zeta_thickening(z[None, :], profile)[0])

    # order A passes through (y', x''), order B through (x', y'')
    if corner_zeta(y[:d], x[d:]) >= corner_zeta(x[:d], y[d:]):
        legs = [(slice(0, d), y[:d], e2), (slice(d, x.size), y[d:], eq)]
    else:
        legs = [(slice(d, x.size), y[d:], eq), (slice(0, d), y[:d], e2)]
    pts = [x.copy()]
    for sl, target, norm_fn in legs:
        if pts[-1][sl].size == 0:
            continue
        for v in arc(pts[-1][sl], target, norm_fn):
            cur = pts[-1].copy()
            cur[sl] = v
            pts.append(cur)
    if not np.allclose(pts[-1], y):
        pts.append(y.copy())
    return np.stack(pts)


def verify_singular_bounds(Phi: SingularMap, orders=(1, 2, 3),
                           beta_list=(0.5, 1.0), n_samples: int = 2000,
                           rng_seed: int = 0, collar: float | None = None,
                           sample_box: Box | None = None) -> dict:
    """Measured certificates: sup |D^j Phi| zeta^j / eta and inf jac (zeta/eta)^beta.

    Samples keep a collar around the singular set so the widest stencil stays
    clear; results are recorded into certified_bounds and returned.
    """
    eta = Phi.eta
    steps = {1: 1e-6 * eta, 2: 1e-4 * eta, 3: 1e-3 * eta}
    if collar is None:
        collar = 4 * max(steps[j] for j in (*orders, 1)) * 2.5
    box = sample_box if sample_box is not None else Phi.transform.support_box
    rng = np.random.default_rng(rng_seed)
    pts = box.sample(4 * n_samples, rng)
    keep = Phi.singular_dist(pts) >= collar
    pts = pts[keep][:n_samples]
    zeta = np.asarray(Phi.zeta(pts), dtype=float).reshape(-1)
    report: dict = {"orders": {}, "jacobian": {}, "n": int(pts.shape[0]),
                    "collar": collar}
    from .fields import Field

    comp = Field(box, Phi.m, Phi.transform.fn)
    for j in orders:
        if j > 2:
            dn = _third_derivative_norm(comp, pts, steps[3])
        else:
            dn = comp.derivative_norm(pts, order=j, h=steps[j])
        report["orders"][j] = {
            "sup_normalized": float(np.max(dn * zeta**j / eta)),
        }
    J = Phi.transform.jacobian(pts, h=steps[1])
    det = np.linalg.det(J)
    for beta in beta_list:
        report["jacobian"][beta] = {
            "inf_normalized": float(np.min(det * (zeta / eta) ** beta)),
        }
    Phi.certified_bounds.update(report)
    return report


def _third_derivative_norm(comp, pts, h):
    """Frobenius norm of the third derivative by differencing Hessians."""
    m = pts.shape[1]
    out = np.zeros(pts.shape[0])
    for ax in range(m):
        e = np.zeros(m)
        e[ax] = h
        hp = comp.derivative(pts + e, order=2, h=h)
        hm = comp.derivative(pts - e, order=2, h=h)
        diff = (hp - hm) / (2 * h)
        out += np.sum(diff.reshape(pts.shape[0], -1) ** 2, axis=-1)
    return np.sqrt(out)


def certify_injectivity(Phi: SingularMap, n_samples: int = 100_000,
                        resolution: float = 1e-9, rng_seed: int = 0,
                        sample_box: Box | None = None) -> dict:
    """Hash images on a fine grid: zero collisions certifies injectivity."""
    box = sample_box if sample_box is not None else Phi.transform.support_box
    rng = np.random.default_rng(rng_seed)
    pts = box.sample(n_samples, rng)
    pts = pts[Phi.singular_dist(pts) > 1e-7 * Phi.eta]
    images = Phi(pts)
    keys = np.round(images / (resolution * Phi.eta)).astype(np.int64)
    uniq = np.unique(keys, axis=0)
    collisions = keys.shape[0] - uniq.shape[0]
    return {"n": int(keys.shape[0]), "collisions": int(collisions),
            "pass": bool(collisions == 0)}
