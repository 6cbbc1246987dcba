"""Shrinking: smooth injective maps compressing dual-skeleton neighborhoods.

Structurally a desingularized twin of thickening: the regularized distance
carries an extra constant term, so the stretch profile stays bounded and the
block is smooth on all of R^m.  A neighborhood of the dual skeleton of size
mu*eta is covered by the image of the much smaller tau*mu*eta neighborhood,
which is what gives topological extensions controlled energy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boxes import Box, MaskedRegion
from .cubication import Cubication, skeleton, dual_skeleton
from .errors import BadDimension, BudgetExhausted, InadmissibleProfile
from .fields import Field, TransformMap, compose_transforms
from .glue import GluedLevel
from .norms import QuadratureSpec, gagliardo_seminorm, lp_norm, wkp_seminorm
from .profiles import DilationProfile, QNormStep, SingularRadialProfile


@dataclass
class ShrinkingProfile:
    """Radii 0 < mu_lo < mu < mu_hi < 1, compression tau, regularizer eps."""

    d: int
    m: int
    eta: float
    mu_lo: float
    mu: float
    mu_hi: float
    tau: float
    epsilon: float | None = None
    b: float | None = None
    q: int | None = None

    def __post_init__(self):
        if not 0 < self.mu_lo < self.mu < self.mu_hi < 1:
            raise InadmissibleProfile(
                f"need 0 < {self.mu_lo} < {self.mu} < {self.mu_hi} < 1"
            )
        if not 0 < self.tau < self.mu_lo / self.mu:
            raise InadmissibleProfile("tau must lie in (0, mu_lo/mu)")
        if not 1 <= self.d <= self.m:
            raise BadDimension(f"d={self.d} outside [1, {self.m}]")
        ratio = self.mu_lo / self.mu
        if self.epsilon is None:
            self.epsilon = 0.5 * ((1.0 / ratio) ** 2 - 1.0)
        A = ratio * math.sqrt(1.0 + self.epsilon)
        if not A < 1:
            raise InadmissibleProfile("(mu_lo/mu) sqrt(1+eps) must be < 1")
        b_max = (1.0 / A - 1.0) * math.log(1.0 / A)
        if self.b is None:
            self.b = 0.5 * b_max
        elif not A * (1 + self.b / math.log(1.0 / A)) < 1:
            raise InadmissibleProfile("log-correction constant too large")
        inner = self.tau * math.sqrt(1.0 + self.epsilon)
        self.theta = QNormStep(self.m - self.d, (1 - self.mu_hi) / self.mu,
                               (1 - self.mu) / self.mu, q=self.q)
        self.phi = SingularRadialProfile(amp=A, inner=inner, outer=1.0, b=self.b)
        self.b = self.phi.b  # the profile may have halved it for monotonicity

    @property
    def r1(self) -> float:
        return self.theta.r1

    @property
    def r2(self) -> float:
        return self.theta.r2


def zeta_shrinking(x, profile: ShrinkingProfile, eta: float | None = None):
    """sqrt(|x'|^2 + (mu eta)^2 theta(x''/(mu eta)) + (mu eta)^2 eps tau^2);
    strictly positive everywhere thanks to the regularizing term."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    eta = profile.eta if eta is None else eta
    d = profile.d
    me = profile.mu * eta
    theta = profile.theta(x[:, d:] / me)
    return np.sqrt(np.sum(x[:, :d] ** 2, axis=-1)
                   + me**2 * theta + me**2 * profile.epsilon * profile.tau**2)


def phi_profile_shrinking(r, profile: ShrinkingProfile):
    """Stretch factor >= 1; closed form up to tau sqrt(1+eps), 1 from 1 on."""
    return profile.phi(np.asarray(r, dtype=float))


class _BlockShrinking:
    """Local-coordinate smooth block: Theta after the regularized stretch."""

    def __init__(self, profile: ShrinkingProfile):
        self.p = profile
        try:
            self.dilate = DilationProfile(profile.d, anchor=profile.mu_lo,
                                          outer=profile.mu)
        except ValueError as e:
            raise InadmissibleProfile(str(e)) from e
        self.slab = profile.theta

    def stretch(self, x: np.ndarray) -> np.ndarray:
        p = self.p
        zeta = zeta_shrinking(x, p)
        lam = phi_profile_shrinking(zeta / (p.mu * p.eta), p)
        out = x.copy()
        out[:, :p.d] = lam[:, None] * x[:, :p.d]
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        p = self.p
        y = self.stretch(x)
        if self.dilate.trivial:
            return y
        h = self.dilate.factor(y[:, :p.d], p.eta)
        chi = 1.0 - self.slab(y[:, p.d:] / (p.mu * p.eta))
        factor = 1.0 + (h - 1.0) * chi
        out = y.copy()
        out[:, :p.d] = factor[:, None] * y[:, :p.d]
        return out

    def support_box(self) -> Box:
        p = self.p
        r = np.concatenate([
            np.full(p.d, p.mu * p.eta),
            np.full(p.m - p.d, (1 - p.mu) * p.eta),
        ])
        return Box(-r, r)

    def target_box(self) -> Box:
        """Q_2: covered by the image of the small cylinder B_1."""
        p = self.p
        r = np.concatenate([
            np.full(p.d, p.mu_lo * p.eta),
            np.full(p.m - p.d, (1 - p.mu_hi) * p.eta),
        ])
        return Box(-r, r)

    def source_box(self) -> Box:
        """B_1 bounding box: tau mu eta across, (1 - mu_hi) eta along."""
        p = self.p
        r = np.concatenate([
            np.full(p.d, p.tau * p.mu * p.eta),
            np.full(p.m - p.d, (1 - p.mu_hi) * p.eta),
        ])
        return Box(-r, r)


def build_block_shrinking(d: int, eta: float, profile: ShrinkingProfile | None = None,
                          m: int | None = None, **kw) -> TransformMap:
    """Standalone shrinking block around the face Q^d_eta x {0}^(m-d)."""
    if profile is None:
        m = d if m is None else m
        profile = ShrinkingProfile(d=d, m=m, eta=eta, **kw)
    blk = _BlockShrinking(profile)
    tr = TransformMap(profile.m, blk, blk.support_box(), name=f"shrink-d{d}",
                      fd_scale=eta)
    tr.profile = profile
    tr.block = blk
    return tr


def preimage_by_bisection(block: TransformMap, target: np.ndarray,
                          iters: int = 60) -> np.ndarray:
    """Invert a radial block: solve Phi(t x_dir, x'') = target along the ray.

    Valid because the block fixes x'' and scales x' by a positive factor
    increasing with |x'| (the intermediate-value structure of the profile).
    """
    blk = block.block
    p = blk.p
    d = p.d
    target = np.atleast_2d(np.asarray(target, dtype=float))
    out = target.copy()
    rp = np.linalg.norm(target[:, :d], axis=-1)
    dirs = np.where(rp[:, None] > 0, target[:, :d] / np.maximum(rp, 1e-300)[:, None],
                    np.eye(d)[0][None, :])
    lo = np.zeros(target.shape[0])
    hi = np.full(target.shape[0], float(np.max(block.support_box.hi)) * 2)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        probe = target.copy()
        probe[:, :d] = mid[:, None] * dirs
        got = np.linalg.norm(blk(probe)[:, :d], axis=-1)
        high = got > rp
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    out[:, :d] = (0.5 * (lo + hi))[:, None] * dirs
    return out


def shrink_chain(ell: int, m: int, mu: float) -> tuple[list[float], list[float]]:
    """mu = mu_ell < nu_(ell+1) < mu_(ell+1) < ... < nu_m < mu_m <= 2 mu."""
    n = 2 * (m - ell) + 1
    ladder = [mu * (1.0 + 0.95 * j / (n - 1)) for j in range(n)]
    mus = [ladder[2 * i] for i in range(m - ell + 1)]        # mu_ell..mu_m
    nus = [ladder[2 * i + 1] for i in range(m - ell)]        # nu_(ell+1)..nu_m
    return mus, nus


def build_shrinking(K: Cubication, ell: int, eta: float, mu: float,
                    tau: float) -> TransformMap:
    """Global shrinking around the dual skeleton of the ell-skeleton of K.

    Downward induction d = m..ell+1 with per-level radii (mu_(d-1), nu_d,
    mu_d) and compression tau*mu/nu_d; smooth everywhere, identity outside
    the 2*mu*eta neighborhood of the dual skeleton.
    """
    m = K.m
    if not 0 <= ell <= m - 1:
        raise BadDimension(f"ell={ell} outside [0, {m - 1}]")
    if not (0 < mu < 0.5 and 0 < tau < 0.5):
        raise InadmissibleProfile("need 0 < mu < 1/2 and 0 < tau < 1/2")
    mus, nus = shrink_chain(ell, m, mu)
    T = dual_skeleton(K, ell)
    total: TransformMap | None = None
    for d in range(m, ell, -1):
        mu_lo = mus[d - 1 - ell]
        mu_mid = nus[d - 1 - ell]
        mu_hi = mus[d - ell]
        profile = ShrinkingProfile(d=d, m=m, eta=eta, mu_lo=mu_lo, mu=mu_mid,
                                   mu_hi=mu_hi, tau=tau * mu / mu_mid)
        faces = skeleton(K, d).faces
        blk = _BlockShrinking(profile)
        glued = GluedLevel(K, faces, [blk] * len(faces),
                           own_free=mu_mid * eta, own_fixed=(1 - mu_mid) * eta)
        boxes = [f.box(2 * mu * eta) for f in faces]
        lo = np.min(np.stack([b.lo for b in boxes]), axis=0)
        hi = np.max(np.stack([b.hi for b in boxes]), axis=0)
        level = TransformMap(m, glued, Box(lo, hi), name=f"shrink-level-{d}",
                             fd_scale=eta)
        # lower levels wrap outside: the top level acts first
        total = level if total is None else compose_transforms(level, total)
    assert total is not None
    total.dual_skeleton = T
    total.name = f"shrink(mu={mu},tau={tau})"
    return total


def tube_region(K: Cubication, T, margin: float, name: str = "tube") -> MaskedRegion:
    """K intersected with the margin-neighborhood of the dual skeleton."""
    bb = Box(np.min(K.centers, axis=0) - K.eta, np.max(K.centers, axis=0) + K.eta)

    def indicator(pts):
        return (T.dist(pts, "sup") < margin) & (K.union_dist(pts) <= 0.0)

    return MaskedRegion(bb, indicator, name)


def select_tau(u: Field, v: Field, K: Cubication, ell: int, eta: float,
               mu: float, s: float, p: float, spec: QuadratureSpec,
               budget: int = 8) -> tuple[float, dict]:
    """Halve tau until the tau-weighted full-tube energy of u drops below the
    v-only terms in the composition estimates.

    u is the (possibly expensive) extension, v the reference map equal to u
    outside the mu*eta tube.  The weight shrinks like tau^((ell+1-sp)/p), so
    the search terminates whenever the exponent is positive.
    """
    sp = s * p
    expo = (ell + 1 - sp) / p
    if expo <= 0:
        raise BudgetExhausted("tau weight exponent not positive: ell+1 <= sp")
    T = dual_skeleton(K, ell)
    tube2 = tube_region(K, T, 2 * mu * eta, "tube-2mu")
    me = mu * eta
    k = int(math.floor(s))
    sigma = s - k

    def energy(w: Field) -> float:
        total = lp_norm(w, tube2, p, spec).value
        for j in range(1, k + 1):
            total += (me**j) * wkp_seminorm(w, tube2, j, p, spec).value
        if sigma > 0:
            total += (me**s) * gagliardo_seminorm(w, tube2, sigma, p, spec).value
        return total

    A0 = energy(u)
    B = energy(v)
    trail = []
    tau = 0.25
    for _ in range(budget):
        weighted = tau**expo * A0
        trail.append({"tau": tau, "weighted_u_energy": weighted, "v_energy": B})
        if weighted <= max(B, 1e-300):
            return tau, {"accepted": tau, "u_energy": A0, "v_energy": B,
                         "trail": trail, "exponent": expo}
        tau *= 0.5
    raise BudgetExhausted(
        f"tau halving budget exhausted; u-tube energy {A0:.3g} vs v {B:.3g}"
    )
