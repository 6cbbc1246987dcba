"""Evaluable vector fields, sphere targets, transform maps, and seeds.

Fields are vectorized procedures: ``eval`` takes points of shape (n, m) and
returns values of shape (n, nu).  Compositions stay lazy so that resampling
happens exactly once, at quadrature time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import Box
from .errors import (
    EvalOutsideDomain,
    OutsideTubularNeighborhood,
    UnknownSeed,
)

_FD_STEP_FACTOR = 1e-5  # default FD step as a fraction of the ambient scale


def _as_points(x, m: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x.reshape(1, m), True
    return x, False


class Field:
    """Map from a box in R^m to R^nu with singularity metadata."""

    def __init__(self, domain: Box, nu: int, fn, singular_set=None,
                 smoothness_hint: str = "smooth", name: str = "field"):
        self.domain = domain
        self.nu = nu
        self.fn = fn
        self.singular_set = singular_set  # Skeleton, (k, m) point array, or None
        self.smoothness_hint = smoothness_hint
        self.name = name

    @property
    def m(self) -> int:
        return self.domain.m

    def __call__(self, x) -> np.ndarray:
        pts, single = _as_points(x, self.m)
        vals = np.asarray(self.fn(pts), dtype=float).reshape(pts.shape[0], self.nu)
        return vals[0] if single else vals

    def singular_dist(self, x) -> np.ndarray:
        """Euclidean distance to the declared singular set (inf if none)."""
        pts, single = _as_points(x, self.m)
        if self.singular_set is None:
            d = np.full(pts.shape[0], np.inf)
        elif isinstance(self.singular_set, np.ndarray):
            diff = pts[:, None, :] - self.singular_set[None, :, :]
            d = np.min(np.sqrt(np.sum(diff * diff, axis=-1)), axis=-1)
        else:
            d = self.singular_set.dist(pts, "euclidean")
        return float(d[0]) if single else d

    def derivative(self, x, order: int = 1, h: float | None = None) -> np.ndarray:
        """Centered finite differences; order 1 -> (n, nu, m), 2 -> (n, nu, m, m)."""
        pts, single = _as_points(x, self.m)
        if h is None:
            h = _FD_STEP_FACTOR * float(np.max(self.domain.half_widths))
        n, m = pts.shape
        if order == 1:
            out = np.empty((n, self.nu, m))
            for i in range(m):
                e = np.zeros(m)
                e[i] = h
                out[:, :, i] = (self(pts + e) - self(pts - e)) / (2 * h)
        elif order == 2:
            out = np.empty((n, self.nu, m, m))
            f0 = self(pts)
            for i in range(m):
                ei = np.zeros(m)
                ei[i] = h
                out[:, :, i, i] = (self(pts + ei) + self(pts - ei) - 2 * f0) / h**2
                for j in range(i + 1, m):
                    ej = np.zeros(m)
                    ej[j] = h
                    mixed = (
                        self(pts + ei + ej) - self(pts + ei - ej)
                        - self(pts - ei + ej) + self(pts - ei - ej)
                    ) / (4 * h**2)
                    out[:, :, i, j] = mixed
                    out[:, :, j, i] = mixed
        else:
            raise ValueError("order must be 1 or 2")
        return out[0] if single else out

    def derivative_norm(self, x, order: int = 1, h: float | None = None) -> np.ndarray:
        """Frobenius norm of the order-th derivative tensor at each point."""
        d = self.derivative(np.atleast_2d(np.asarray(x, dtype=float)), order, h)
        return np.sqrt(np.sum(d.reshape(d.shape[0], -1) ** 2, axis=-1))

    def dump_grid_csv(self, path, grid_n: int) -> None:
        """CSV rows x_1..x_m, u_1..u_nu over a regular grid."""
        pts, _ = self.domain.grid(grid_n)
        vals = self(pts)
        with open(path, "w", newline="\n") as fh:
            head = [f"x{i}" for i in range(self.m)] + [f"u{j}" for j in range(self.nu)]
            fh.write(",".join(head) + "\n")
            for p, v in zip(pts, vals):
                row = list(p) + list(v)
                fh.write(",".join("%.12g" % t for t in row) + "\n")


@dataclass
class TargetManifold:
    """Embedded target: unit sphere S^(nu-1) in R^nu (covers the circle)."""

    nu: int
    iota: float = 1.0
    obstruction: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.iota <= 1.0:
            raise ValueError("sphere tubular radius must lie in (0, 1]")
        n = self.nu - 1  # sphere dimension
        defaults = {}
        for ell in range(0, 8):
            if ell == 0:
                defaults[ell] = "trivial"  # spheres are connected
            elif ell < n:
                defaults[ell] = "trivial"
            elif ell == n:
                defaults[ell] = "nontrivial"
            elif n == 1:
                defaults[ell] = "trivial"  # higher homotopy of the circle
            elif n == 2 and ell == 3:
                defaults[ell] = "nontrivial"
            else:
                defaults[ell] = "unknown"
        defaults.update(self.obstruction)
        self.obstruction = defaults

    @property
    def kind(self) -> str:
        return "circle" if self.nu == 2 else "sphere"


def dist_to_manifold(N: TargetManifold, y) -> np.ndarray | float:
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    pts = np.atleast_2d(y)
    d = np.abs(np.linalg.norm(pts, axis=-1) - 1.0)
    return float(d[0]) if single else d


def project_to_manifold(N: TargetManifold, y) -> np.ndarray:
    """Nearest-point projection y/|y|.

    The projection degenerates only toward the origin, so the tubular
    condition is enforced on the inner side: |y| must exceed 1 - iota.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    pts = np.atleast_2d(y)
    r = np.linalg.norm(pts, axis=-1)
    if np.any(r <= 1.0 - N.iota + 1e-300):
        worst = float(np.min(r))
        raise OutsideTubularNeighborhood(
            f"|y| = {worst:.6g} inside the critical radius {1.0 - N.iota:.6g}"
        )
    out = pts / r[:, None]
    return out[0] if single else out


def project_field(u: Field, N: TargetManifold) -> Field:
    """Pointwise nearest-point projection of a field onto the target."""

    def fn(x):
        return project_to_manifold(N, u(x))

    return Field(u.domain, N.nu, fn, singular_set=u.singular_set,
                 smoothness_hint=u.smoothness_hint, name=f"proj({u.name})")


class TransformMap:
    """Map R^m -> R^m that is the identity outside its support box."""

    def __init__(self, m: int, fn, support_box: Box, singular_set=None,
                 jacobian=None, name: str = "transform", fd_scale: float = 1.0):
        self.m = m
        self.fn = fn
        self.support_box = support_box
        self.singular_set = singular_set
        self._jacobian = jacobian
        self.name = name
        self.fd_scale = fd_scale

    def __call__(self, x) -> np.ndarray:
        pts, single = _as_points(x, self.m)
        out = np.asarray(self.fn(pts), dtype=float).reshape(pts.shape)
        return out[0] if single else out

    def jacobian(self, x, h: float | None = None) -> np.ndarray:
        """(n, m, m) Jacobian; exact if provided, else centered differences."""
        pts, single = _as_points(x, self.m)
        if self._jacobian is not None:
            J = np.asarray(self._jacobian(pts), dtype=float)
        else:
            if h is None:
                h = _FD_STEP_FACTOR * self.fd_scale
            J = np.empty((pts.shape[0], self.m, self.m))
            for i in range(self.m):
                e = np.zeros(self.m)
                e[i] = h
                J[:, :, i] = (self(pts + e) - self(pts - e)) / (2 * h)
        return J[0] if single else J

    def jacobian_det(self, x, h: float | None = None) -> np.ndarray:
        J = self.jacobian(np.atleast_2d(np.asarray(x, dtype=float)), h)
        return np.linalg.det(J)

    def derivative_sup(self, x, order: int = 1, h: float | None = None) -> np.ndarray:
        """Frobenius norm of D^order at each point, by nested differences."""
        pts, _ = _as_points(x, self.m)
        if h is None:
            h = 1e-4 * self.fd_scale
        comps = Field(self.support_box, self.m, self.fn)
        d = comps.derivative(pts, order=order, h=h)
        return np.sqrt(np.sum(d.reshape(d.shape[0], -1) ** 2, axis=-1))

    def dump_displacement_csv(self, path, grid_n: int) -> None:
        pts, _ = self.support_box.grid(grid_n)
        disp = self(pts) - pts
        with open(path, "w", newline="\n") as fh:
            head = [f"x{i}" for i in range(self.m)] + [f"d{i}" for i in range(self.m)]
            fh.write(",".join(head) + "\n")
            for p, v in zip(pts, disp):
                fh.write(",".join("%.12g" % t for t in list(p) + list(v)) + "\n")


def identity_map(m: int, scale: float = 1.0) -> TransformMap:
    return TransformMap(
        m, lambda x: x, Box.cube(0.0, m), name="identity", fd_scale=scale
    )


def compose_transforms(outer: TransformMap, inner: TransformMap) -> TransformMap:
    """outer after inner; support is the union box."""
    lo = np.minimum(outer.support_box.lo, inner.support_box.lo)
    hi = np.maximum(outer.support_box.hi, inner.support_box.hi)
    sing = inner.singular_set if inner.singular_set is not None else outer.singular_set

    def fn(x):
        return outer(inner(x))

    return TransformMap(outer.m, fn, Box(lo, hi), singular_set=sing,
                        name=f"{outer.name}*{inner.name}",
                        fd_scale=min(outer.fd_scale, inner.fd_scale))


def compose(u: Field, Phi: TransformMap, check_domain: bool = True) -> Field:
    """Lazy composition u(Phi(x)); domain violations surface at call time."""

    def fn(x):
        y = Phi(x)
        if check_domain and not np.all(u.domain.contains(y, tol=1e-9)):
            bad = y[~u.domain.contains(y, tol=1e-9)][0]
            raise EvalOutsideDomain(f"composition leaves domain at {bad}")
        return u(np.asarray(y))

    sing = Phi.singular_set if Phi.singular_set is not None else u.singular_set
    return Field(u.domain, u.nu, fn, singular_set=sing,
                 smoothness_hint=u.smoothness_hint, name=f"{u.name}o{Phi.name}")


def seed_field(name: str, m: int = 2, domain: Box | None = None, **params) -> Field:
    """Built-in example fields with correct singularity metadata."""
    if domain is None:
        domain = Box.cube(params.pop("radius", 1.0), m)
    if name == "radial_projection":
        origin = np.zeros(m)

        def fn(x):
            r = np.linalg.norm(x, axis=-1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                return x / r

        return Field(domain, m, fn, singular_set=origin.reshape(1, m),
                     smoothness_hint="class_R", name="radial_projection")
    if name == "winding_k":
        k = int(params.get("k", 1))
        if m != 2:
            raise UnknownSeed("winding_k needs m = 2")

        def fn(x):
            theta = np.arctan2(x[:, 1], x[:, 0])
            return np.stack([np.cos(k * theta), np.sin(k * theta)], axis=-1)

        return Field(domain, 2, fn, singular_set=np.zeros((1, 2)),
                     smoothness_hint="class_R", name=f"winding_{k}")
    if name == "constant":
        c = np.atleast_1d(np.asarray(params.get("value", 1.0), dtype=float))

        def fn(x):
            return np.broadcast_to(c, (x.shape[0], c.size)).copy()

        return Field(domain, c.size, fn, name="constant")
    if name == "smooth_bump":
        amp = float(params.get("amplitude", 1.0))
        width = float(params.get("width", 0.8))

        def fn(x):
            r2 = np.sum((x / width) ** 2, axis=-1)
            out = np.zeros_like(r2)
            inside = r2 < 1.0
            out[inside] = amp * np.exp(-1.0 / (1.0 - r2[inside]))
            return out[:, None]

        return Field(domain, 1, fn, name="smooth_bump")
    if name == "sampled_grid":
        values = np.asarray(params["values"], dtype=float)
        return sampled_grid_field(domain, values)
    raise UnknownSeed(f"unknown seed {name!r}")


def sampled_grid_field(domain: Box, values: np.ndarray) -> Field:
    """Multilinear interpolation of node values on a regular grid.

    ``values`` has shape (n_0, ..., n_{m-1}) or (n_0, ..., n_{m-1}, nu); nodes
    are equally spaced including the domain corners, exact at the nodes.
    """
    if values.ndim == domain.m:
        values = values[..., None]
    nu = values.shape[-1]
    shape = values.shape[:-1]

    def fn(x):
        t = (x - domain.lo) / (domain.hi - domain.lo)
        t = np.clip(t, 0.0, 1.0)
        out = np.zeros((x.shape[0], nu))
        idx = []
        frac = []
        for ax, n in enumerate(shape):
            pos = t[:, ax] * (n - 1)
            i0 = np.clip(np.floor(pos).astype(int), 0, n - 2)
            idx.append(i0)
            frac.append(pos - i0)
        import itertools as _it

        for corner in _it.product((0, 1), repeat=domain.m):
            w = np.ones(x.shape[0])
            sel = []
            for ax, c in enumerate(corner):
                w = w * (frac[ax] if c else (1.0 - frac[ax]))
                sel.append(idx[ax] + c)
            out += w[:, None] * values[tuple(sel)]
        return out

    return Field(domain, nu, fn, smoothness_hint="sampled", name="sampled_grid")


@dataclass
class ClassRMap:
    """Field smooth off a skeleton, with recorded derivative blow-up constants."""

    base: Field
    T: object  # Skeleton or point array; the singular set
    blowup_constants: dict[int, float] = field(default_factory=dict)

    def __call__(self, x):
        return self.base(x)

    def dist_to_singular(self, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if self.T is None:
            return np.full(pts.shape[0], np.inf)
        if isinstance(self.T, np.ndarray):
            if self.T.size == 0:
                return np.full(pts.shape[0], np.inf)
            diff = pts[:, None, :] - self.T[None, :, :]
            return np.min(np.sqrt(np.sum(diff * diff, axis=-1)), axis=-1)
        if len(self.T) == 0:
            return np.full(pts.shape[0], np.inf)
        return self.T.dist(pts, "euclidean")


def verify_class_R(r: ClassRMap, jmax: int, samples: int = 400,
                   h: float | None = None, rng_seed: int = 0,
                   slack: float = 1.05) -> dict:
    """Check |D^j u| * dist^j against the recorded constants on samples.

    Samples are drawn in the field's domain, excluding a 4h collar around the
    singular set.  Report-only: returns per-order maxima and a pass flag.
    """
    u = r.base
    if h is None:
        h = 1e-3 * float(np.max(u.domain.half_widths))
    rng = np.random.default_rng(rng_seed)
    pts = u.domain.sample(4 * samples, rng)
    pts = pts[r.dist_to_singular(pts) >= 4 * h][:samples]
    report = {"orders": {}, "pass": True, "h": h, "n_samples": int(pts.shape[0])}
    dist = r.dist_to_singular(pts)
    for j in range(1, jmax + 1):
        dn = u.derivative_norm(pts, order=j, h=h)
        normalized = dn * dist**j
        measured = float(np.max(normalized))
        recorded = r.blowup_constants.get(j)
        ok = True if recorded is None else measured <= recorded * slack
        report["orders"][j] = {
            "max_normalized": measured,
            "recorded_constant": recorded,
            "pass": bool(ok),
        }
        report["pass"] = report["pass"] and ok
    return report
