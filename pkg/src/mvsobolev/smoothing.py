"""Adaptive mollification: variable-radius convolution and its certificates.

The convolution radius is assembled from a smooth transition function that is
small on the core cubes and of order eta elsewhere, so the smoothed field
stays close to the target manifold wherever the composed field either has
small local energy or has been opened.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .boxes import Box
from .cubication import Cubication, Skeleton
from .errors import NoGap, RadiusOrder, TooCloseToBoundary
from .fields import Field, TargetManifold, dist_to_manifold
from .norms import QuadratureSpec
from .opening import oscillation_estimate
from .profiles import bump, plateau


class Mollifier:
    """Radial C-infinity bump supported in the unit ball, unit mass."""

    def __init__(self):
        self._norm_cache: dict[int, float] = {}

    def profile(self, r):
        return bump(r)

    def normalization(self, m: int, n_grid: int = 96) -> float:
        """1 / integral of the raw profile over the unit ball in R^m."""
        if m not in self._norm_cache:
            pts, w = Box.cube(1.0, m).grid(n_grid)
            vals = self.profile(np.linalg.norm(pts, axis=-1))
            self._norm_cache[m] = 1.0 / float(np.sum(vals) * w)
        return self._norm_cache[m]

    def __call__(self, z: np.ndarray) -> np.ndarray:
        """Normalized density at points of shape (..., m)."""
        z = np.asarray(z, dtype=float)
        m = z.shape[-1]
        return self.normalization(m) * self.profile(np.linalg.norm(z, axis=-1))

    def sup(self, m: int) -> float:
        return self.normalization(m) * float(bump(np.array([0.0]))[0])


def build_mollifier() -> Mollifier:
    return Mollifier()


_BALL_QUAD_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def ball_quadrature(m: int, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre grid restricted to the unit ball.

    Nodes are symmetric under sign flips, so odd moments vanish exactly;
    weights are raw tensor weights (normalization happens against the
    mollifier values so that constants are reproduced exactly).
    """
    key = (m, order)
    if key not in _BALL_QUAD_CACHE:
        x, w = np.polynomial.legendre.leggauss(order)
        mesh = np.meshgrid(*([x] * m), indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1)
        mesh_w = np.meshgrid(*([w] * m), indexing="ij")
        wts = np.prod(np.stack([g.ravel() for g in mesh_w], axis=-1), axis=-1)
        keep = np.linalg.norm(pts, axis=-1) < 1.0
        _BALL_QUAD_CACHE[key] = (pts[keep], wts[keep])
    return _BALL_QUAD_CACHE[key]


@dataclass
class SmoothingPlan:
    """Assembled convolution radius: large on good cubes, small on the core."""

    zeta: object            # transition function, values in [0, 1]
    r: float                # small radius (core cubes)
    t: float                # large radius (good cubes)
    eta: float
    kappa: float
    C_zeta: float           # measured sup of eta^j |D^j zeta|^(1/j)
    E: Cubication | None = None
    U: Cubication | None = None

    def psi(self, x: np.ndarray) -> np.ndarray:
        z = self.zeta(np.atleast_2d(np.asarray(x, dtype=float)))
        return self.t * z + self.r * (1.0 - z)


class _Transition:
    """Product of per-core-cube cutoffs: 0 on E, 1 beyond E + Q_(1-delta)eta."""

    def __init__(self, E: Cubication, eta: float, delta: float = 0.2):
        self.centers = E.centers if len(E) else np.zeros((0, E.m))
        self.eta = eta
        self.delta = delta

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.ones(x.shape[0])
        for c in self.centers:
            t = np.max(np.abs(x - c), axis=-1) / self.eta
            out = out * (1.0 - plateau(t, 1.0 + self.delta, 2.0 - self.delta))
        return out


def build_transition(K: Cubication, U: Cubication, E: Cubication, eta: float,
                     kappa: float = 0.9, fd_samples: int = 600,
                     rng_seed: int = 0) -> SmoothingPlan:
    """Smooth transition: 0 on the core cubes, 1 off their neighborhood.

    Requires a full-cube gap between E and the complement of U (guaranteed
    when U is the adjacent closure of E); the derivative constant is measured
    by finite differences and recorded.
    """
    if len(E):
        if not E.key_set <= U.key_set:
            raise NoGap("core cubes not inside U")
        offsets = np.array(list(itertools.product((-2, 0, 2), repeat=K.m)))
        for k in E.center_keys:
            for cand in (k[None, :] + offsets):
                t = tuple(cand.tolist())
                if t in K.key_set and t not in U.key_set:
                    raise NoGap("a core cube touches the complement of U")
    zeta = _Transition(E, eta)
    # measured derivative constant
    C = 0.0
    if len(E):
        rng = np.random.default_rng(rng_seed)
        pts = np.concatenate([
            Box.from_center_radius(c, 2 * eta).sample(
                max(1, fd_samples // len(E)), rng)
            for c in E.centers
        ])
        h = 1e-5 * eta
        for ax in range(K.m):
            e = np.zeros(K.m)
            e[ax] = h
            d = (zeta(pts + e) - zeta(pts - e)) / (2 * h)
            C = max(C, float(np.max(np.abs(d))) * eta)
    C = max(C, 1e-9)
    return SmoothingPlan(zeta=zeta, r=0.0, t=0.0, eta=eta, kappa=kappa,
                         C_zeta=C, E=E, U=U)


def assemble_psi(plan: SmoothingPlan, rho: float, rho_lo: float,
                 r: float | None = None, kappa: float | None = None) -> SmoothingPlan:
    """Fix the two radii: t = min(kappa/C_zeta, rho - rho_lo) * eta, r < t."""
    kappa = plan.kappa if kappa is None else kappa
    t = min(kappa / plan.C_zeta, rho - rho_lo) * plan.eta
    if r is None:
        r = t / 64.0
    if not 0 < r < t:
        raise RadiusOrder(f"need 0 < r={r} < t={t}")
    plan.r, plan.t, plan.kappa = float(r), float(t), float(kappa)
    return plan


def psi_derivative_sup(plan: SmoothingPlan, n_samples: int = 800,
                       rng_seed: int = 1) -> float:
    """Sampled sup of |D psi|; certified below kappa < 1 by construction."""
    if plan.E is None or len(plan.E) == 0:
        return 0.0
    rng = np.random.default_rng(rng_seed)
    pts = np.concatenate([
        Box.from_center_radius(c, 2 * plan.eta).sample(
            max(1, n_samples // len(plan.E)), rng)
        for c in plan.E.centers
    ])
    h = 1e-5 * plan.eta
    sup = 0.0
    for ax in range(pts.shape[1]):
        e = np.zeros(pts.shape[1])
        e[ax] = h
        d = (plan.psi(pts + e) - plan.psi(pts - e)) / (2 * h)
        sup = max(sup, float(np.max(np.abs(d))))
    return sup * np.sqrt(pts.shape[1])


def adaptive_convolve(u: Field, plan: SmoothingPlan, moll: Mollifier,
                      order: int = 8, eval_domain: Box | None = None) -> Field:
    """Variable-radius mollification of u; smooth wherever defined.

    Evaluation must stay at distance >= psi(x) from the domain boundary;
    violations raise at call time.  Constants are reproduced exactly because
    the quadrature weights are normalized against the mollifier itself.
    """
    m = u.m
    nodes, wts = ball_quadrature(m, order)
    phi_vals = moll(nodes)
    norm = 1.0 / float(np.sum(phi_vals * wts))
    weights = phi_vals * wts * norm

    dom = eval_domain if eval_domain is not None else u.domain

    def fn(x: np.ndarray) -> np.ndarray:
        psi = plan.psi(x)
        margin_lo = np.min(x - u.domain.lo, axis=-1)
        margin_hi = np.min(u.domain.hi - x, axis=-1)
        if np.any(np.minimum(margin_lo, margin_hi) < psi - 1e-12):
            raise TooCloseToBoundary("convolution ball leaves the field domain")
        out = np.zeros((x.shape[0], u.nu))
        for z, w in zip(nodes, weights):
            out += w * u(x + psi[:, None] * z)
        return out

    return Field(dom, u.nu, fn, smoothness_hint="smooth",
                 name=f"smooth({u.name})")


def distance_certificate(u_sm: Field, u_op: Field, N: TargetManifold,
                         regions: dict[str, object], plan: SmoothingPlan,
                         spec: QuadratureSpec, moll: Mollifier | None = None,
                         n_samples: int = 400, rng_seed: int = 2) -> dict:
    """Per-region sampled sup of dist(u_sm, N) plus the bounding quantities.

    regions maps names (good / skeleton / transition) to sampleable regions;
    the oscillation term is measured from the opened field at radius psi(x).
    """
    rng = np.random.default_rng(rng_seed)
    moll = moll or build_mollifier()
    report: dict = {"regions": {}, "oscillation_constant": 2**u_sm.m * moll.sup(u_sm.m)}
    overall = 0.0
    for name, region in regions.items():
        if region is None:
            continue
        try:
            pts = region.sample(n_samples, rng)
        except Exception:
            continue
        if pts.shape[0] == 0:
            continue
        d = dist_to_manifold(N, u_sm(pts))
        entry = {"sup_dist": float(np.max(d)), "mean_dist": float(np.mean(d)),
                 "n": int(pts.shape[0])}
        if name == "skeleton":
            # oscillation bound at the convolution radius, on a subsample
            sub = pts[:: max(1, pts.shape[0] // 24)]
            psi = plan.psi(sub)
            osc = [
                oscillation_estimate(u_op, Box.from_center_radius(c, max(pp, 1e-9)),
                                     spec, grid_n=4)
                for c, pp in zip(sub, psi)
            ]
            entry["oscillation_term"] = float(np.max(osc)) * report["oscillation_constant"]
        report["regions"][name] = entry
        overall = max(overall, entry["sup_dist"])
    report["sup_dist"] = overall
    report["pass"] = bool(overall < N.iota)
    return report
