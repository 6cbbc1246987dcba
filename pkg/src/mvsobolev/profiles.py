"""Smooth scalar building blocks: bumps, steps, and singular radial profiles.

All constructions here are C-infinity in the interior of their branches and
glued with flat-ended smoothsteps.  Monotonicity requirements that the gluing
cannot guarantee analytically are enforced by a fine grid check at build time
(the constructor retries with a halved log-correction before giving up).
"""
from __future__ import annotations

import numpy as np

from .errors import ProfileNotMonotone


def bump(t):
    """exp(-1/(1-t^2)) on |t|<1, 0 outside; C-infinity."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
    return out


def _half_exp(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smoothstep(t):
    """C-infinity monotone step: 0 for t<=0, 1 for t>=1, flat at both ends."""
    a = _half_exp(t)
    b = _half_exp(1.0 - np.asarray(t, dtype=float))
    return a / (a + b)


def step_between(x, lo: float, hi: float):
    """smoothstep rescaled to rise from 0 at x=lo to 1 at x=hi."""
    if not hi > lo:
        raise ValueError("step_between needs hi > lo")
    return smoothstep((np.asarray(x, dtype=float) - lo) / (hi - lo))


def plateau(x, one_until: float, zero_from: float):
    """C-infinity cutoff: 1 for x<=one_until, 0 for x>=zero_from."""
    return 1.0 - step_between(x, one_until, zero_from)


def qnorm(x, q: int, axis: int = -1):
    """|x|_q with even integer q (smooth away from the origin)."""
    x = np.asarray(x, dtype=float)
    if x.shape[axis] == 0:
        return np.zeros(x.shape[:-1] if axis == -1 else None)
    # scale out the max to avoid overflow for large q
    mx = np.max(np.abs(x), axis=axis)
    safe = np.where(mx > 0, mx, 1.0)
    s = np.sum((np.abs(x) / np.expand_dims(safe, axis)) ** q, axis=axis)
    return mx * s ** (1.0 / q)


class QNormStep:
    """Smooth step of the q-norm: 0 for |x|_q <= r1, 1 for |x|_q >= r2.

    Sandwiched so that it vanishes on the sup-ball of radius ``inner`` and
    equals 1 outside the sup-ball of radius ``outer`` (n = ambient dimension).
    """

    def __init__(self, n: int, inner: float, outer: float, q: int | None = None):
        if n < 0 or (n > 0 and not outer > inner > 0):
            raise ValueError("need 0 < inner < outer")
        self.n = n
        if n == 0:
            self.q, self.r1, self.r2 = 2, inner, outer
            return
        if q is None:
            # smallest even q with inner * n^(1/q) < outer, with slack
            need = 1.0 if n == 1 else np.log(n) / np.log(outer / inner)
            q = int(2 * np.ceil(max(3.0, need + 1.0) / 2))
        self.q = q
        self.r1 = inner * n ** (1.0 / q)
        self.r2 = outer
        if not self.r1 < self.r2:
            raise ValueError("q too small for the sandwich; increase q")

    def __call__(self, x):
        """x of shape (..., n); returns values in [0, 1]."""
        if self.n == 0:
            x = np.asarray(x, dtype=float)
            return np.zeros(x.shape[:-1])
        r = qnorm(x, self.q)
        return step_between(r, self.r1, self.r2)


def _check_increasing(fn, lo: float, hi: float, n: int = 20001) -> bool:
    r = np.linspace(lo, hi, n)
    v = fn(r)
    return bool(np.all(np.diff(v) > -1e-14 * max(1.0, np.max(np.abs(v)))))


class SingularRadialProfile:
    """Profile phi >= 1 with phi(r) = amp*(1+b/log(1/r))/r on the inner branch,
    phi = 1 from ``outer`` on, and r*phi(r) increasing everywhere.

    Used with amp = 1 - rho_hi (thickening) or amp = (mu_lo/mu)*sqrt(1+eps)
    (shrinking); ``inner`` is where the closed-form branch must still hold.
    The branch is kept until r*phi(r) crosses below the identity line, then
    the (nonpositive) difference is decayed to zero, which keeps r*phi(r)
    increasing by construction; b is halved until the crossing window opens.
    """

    def __init__(self, amp: float, inner: float, outer: float, b: float):
        if not (0 < amp < 1 and 0 < inner < outer <= 1 and b > 0):
            raise ValueError("bad profile parameters")
        self.amp, self.inner, self.outer = amp, inner, outer
        b_try = b
        for _ in range(80):
            self.b = b_try
            grid = np.linspace(inner, outer, 8001)
            below = self._g(grid) <= grid * (1.0 - 1e-9)
            if np.any(below):
                idx = np.nonzero(below)[0]
                first, last = grid[idx[0]], grid[idx[-1]]
                width = last - first
                # monotonicity holds for any window; just need a real one
                if idx[-1] - idx[0] >= 8 and np.all(below[idx[0]:idx[-1] + 1]):
                    self.decay_from = first + 0.05 * width
                    self.decay_to = last - 0.05 * width
                    if _check_increasing(self.times_r, inner * 1e-6, outer * 1.5):
                        return
            b_try *= 0.5
        raise ProfileNotMonotone(
            f"r*phi(r) not increasing for amp={amp}, inner={inner}, outer={outer}"
        )

    def _formula(self, r):
        return self.amp / r * (1.0 + self.b / np.log(1.0 / r))

    def _g(self, r):
        """The closed-form branch of r*phi(r)."""
        return self.amp * (1.0 + self.b / np.log(1.0 / np.clip(r, 1e-300, 0.999999)))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.ones_like(r)
        core = (r > 0) & (r < self.decay_to)
        rc = r[core]
        keep = plateau(rc, self.decay_from, self.decay_to)
        g = rc + (self._g(rc) - rc) * keep
        out[core] = g / rc
        return out

    def times_r(self, r):
        r = np.asarray(r, dtype=float)
        return r * self(r)


class DilationProfile:
    """Factor profile H(v) for the ball-to-cube dilation.

    v is the scaled smooth sup-norm proxy |x'|_q / d^(1/q) in units of the
    length scale.  H has a flat cap below v0 (keeps the map smooth through
    the axis), equals amp*(1+b/log(1/v))/v on [v0, v1] (ball-sphere points
    land past the cube corners), and returns to 1 by v2; v*H(v) increasing.

    The margin over the identity line scales with the gap outer - anchor, so
    the safety factor and q are derived from the gap rather than fixed.
    """

    def __init__(self, d: int, anchor: float, outer: float):
        if d < 1:
            raise ValueError("d >= 1")
        self.d = d
        if d == 1:
            self.trivial = True
            self.q = 2
            return
        self.trivial = False
        gap = outer - anchor
        if not (0 < anchor < outer < 1):
            raise ValueError("need 0 < anchor < outer < 1")
        q = int(2 * np.ceil(max(3.0, 10.0 * anchor * np.log(d) / gap) / 2))
        margin = gap / 10.0
        b = gap * np.log(1.0 / anchor) / (10.0 * anchor)
        for attempt in range(40):
            self.q = q
            self.amp = anchor + margin
            self.v1 = anchor * d ** (-1.0 / q)
            self.v2 = outer * d ** (-1.0 / q)
            self.v0 = anchor / (np.sqrt(d) * 1.05)
            self.v_cap = 0.8 * self.v0
            self.b = b
            admissible = (
                self.amp * (1 + self.b / np.log(1.0 / self.v1)) < self.v2
            )
            if admissible and _check_increasing(
                lambda r: r * self(r), 1e-9, self.v2 * 1.5
            ):
                return
            b *= 0.5
            margin *= 0.7
            if attempt % 2 == 1:
                q += 2 * max(1, q // 4)
        raise ProfileNotMonotone("v*H(v) not increasing for dilation profile")

    def _formula(self, v):
        return self.amp / v * (1.0 + self.b / np.log(1.0 / v))

    def __call__(self, v):
        if self.trivial:
            return np.ones_like(np.asarray(v, dtype=float))
        v = np.asarray(v, dtype=float)
        out = np.ones_like(v)
        cap_val = self._formula(self.v0)
        lo = v <= self.v_cap
        blend = (v > self.v_cap) & (v < self.v0)
        formula = (v >= self.v0) & (v <= self.v1)
        bridge = (v > self.v1) & (v < self.v2)
        out[lo] = cap_val
        if np.any(blend):
            w = step_between(v[blend], self.v_cap, self.v0)
            out[blend] = (1.0 - w) * cap_val + w * self._formula(v[blend])
        out[formula] = self._formula(v[formula])
        if np.any(bridge):
            w = step_between(v[bridge], self.v1, self.v2)
            out[bridge] = (1.0 - w) * self._formula(v[bridge]) + w
        return out

    def factor(self, xp, scale: float):
        """H evaluated at v = |x'|_q/(d^(1/q)*scale); xp of shape (..., d)."""
        if self.trivial:
            return np.ones(np.asarray(xp, dtype=float).shape[:-1])
        v = qnorm(xp, self.q) / (self.d ** (1.0 / self.q) * scale)
        return self(v)
