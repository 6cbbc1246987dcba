import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvsobolev.boxes import Box, MaskedRegion
from mvsobolev.fields import Field, seed_field
from mvsobolev.norms import (
    QuadratureSpec,
    check_decomposition_annulus,
    check_decomposition_delta,
    check_interpolation,
    gagliardo_seminorm,
    lp_norm,
    sphere_area,
    wkp_seminorm,
    wsp_distance,
)

UNIT = Box(np.array([0.0]), np.array([1.0]))


def linear_field(a=1.0, b=0.0, domain=UNIT):
    return Field(domain, 1, lambda x: a * x[:, :1] + b, name="linear")


def gagliardo_power_oracle(sigma, p):
    """Closed form of seminorm^p for u(x)=x on (0,1): the double integral of
    |x-y|^(p(1-sigma)-1) over the unit square."""
    a1 = p * (1.0 - sigma)
    return 2.0 / (a1 * (a1 + 1.0))


def test_lp_constant():
    dom = Box.cube(1.0, 1)
    u = seed_field("constant", m=1, value=2.0, domain=dom)
    rep = lp_norm(u, dom, 2, QuadratureSpec(grid_n=64))
    assert rep.value == pytest.approx(2 * math.sqrt(2), rel=1e-12)


def test_lp_linear():
    rep = lp_norm(linear_field(), UNIT, 2, QuadratureSpec(grid_n=512))
    assert rep.value == pytest.approx(math.sqrt(1.0 / 3.0), abs=1e-3)


def test_lp_zero():
    u = seed_field("constant", m=1, value=0.0, domain=UNIT)
    assert lp_norm(u, UNIT, 2, QuadratureSpec(grid_n=32)).value == 0.0


def test_wkp_affine():
    a = -1.7
    u = linear_field(a=a)
    spec = QuadratureSpec(grid_n=128)
    rep1 = wkp_seminorm(u, UNIT, 1, 2, spec, h=1e-3)
    assert rep1.value == pytest.approx(abs(a) * 1.0 ** 0.5, rel=1e-8)
    rep2 = wkp_seminorm(u, UNIT, 2, 2, spec, h=1e-3)
    assert rep2.value < 1e-8


def test_wkp_sine():
    u = Field(UNIT, 1, lambda x: np.sin(np.pi * x[:, :1]), name="sine")
    rep = wkp_seminorm(u, UNIT, 1, 2, QuadratureSpec(grid_n=512), h=1e-5)
    assert rep.value == pytest.approx(math.pi / math.sqrt(2), abs=1e-3)


def test_wkp_radial_annulus():
    u = seed_field("radial_projection", m=2, domain=Box.cube(1.0, 2))
    r = np.linalg.norm
    region = MaskedRegion(
        Box.cube(1.0, 2),
        lambda pts: (r(pts, axis=-1) > 0.5) & (r(pts, axis=-1) < 1.0),
        "annulus",
    )
    rep = wkp_seminorm(u, region, 1, 2, QuadratureSpec(grid_n=1024), h=1e-6)
    assert rep.value == pytest.approx(math.sqrt(2 * math.pi * math.log(2)), abs=1e-2)


def test_gagliardo_constant_zero():
    u = seed_field("constant", m=1, value=3.0, domain=UNIT)
    rep = gagliardo_seminorm(u, UNIT, 0.5, 2, QuadratureSpec(grid_n=256))
    assert rep.value == 0.0


@pytest.mark.parametrize("sigma", [0.25, 0.5, 0.75])
def test_gagliardo_linear_oracle(sigma):
    rep = gagliardo_seminorm(linear_field(), UNIT, sigma, 2, QuadratureSpec(grid_n=512))
    expected = gagliardo_power_oracle(sigma, 2)
    assert rep.value**2 == pytest.approx(expected, rel=0.02)


def test_gagliardo_scaling_law():
    # u_lam(x) = u(x/lam) on the dilated region scales seminorm^p by lam^(m - sigma p)
    sigma, p, lam = 0.5, 2.0, 2.0
    u = linear_field()
    ul = Field(Box(np.array([0.0]), np.array([lam])), 1,
               lambda x: x[:, :1] / lam, name="dilated")
    spec = QuadratureSpec(grid_n=512)
    base = gagliardo_seminorm(u, UNIT, sigma, p, spec).value ** p
    dil = gagliardo_seminorm(ul, Box(np.array([0.0]), np.array([lam])), sigma, p,
                             spec).value ** p
    assert dil == pytest.approx(lam ** (1 - sigma * p) * base, rel=0.03)


def test_gagliardo_subregion_monotone():
    u = Field(UNIT, 1, lambda x: np.sin(3 * x[:, :1]) + x[:, :1] ** 2)
    spec = QuadratureSpec(grid_n=256)
    sub = Box(np.array([0.2]), np.array([0.7]))
    big = gagliardo_seminorm(u, UNIT, 0.5, 2, spec).value
    small = gagliardo_seminorm(u, sub, 0.5, 2, spec).value
    assert small <= big * 1.01


def test_gagliardo_mc_matches_all_pairs():
    # force the MC branch with a 2-d field and compare against all-pairs
    dom = Box.cube(1.0, 2)
    u = Field(dom, 1, lambda x: np.sin(x[:, :1] + 2 * x[:, 1:2]))
    excl = 0.5 * 2.0 / 64
    det = gagliardo_seminorm(u, dom, 0.5, 2,
                             QuadratureSpec(grid_n=64, exclusion_radius=excl))
    mc = gagliardo_seminorm(
        u, dom, 0.5, 2,
        QuadratureSpec(grid_n=128, pair_samples=400_000, rng_seed=11,
                       exclusion_radius=excl),
    )
    # allow the deterministic grid its own discretization bias (< 1%)
    assert abs(mc.value - det.value) <= 3 * mc.stat_error + 0.01 * det.value


def test_wsp_distance_zero_and_constant_shift():
    u = linear_field()
    spec = QuadratureSpec(grid_n=256)
    assert wsp_distance(u, u, UNIT, 0.5, 2, spec).value == 0.0
    v = linear_field(b=0.4)
    rep = wsp_distance(u, v, UNIT, 0.5, 2, spec)
    assert rep.value == pytest.approx(0.4, rel=0.02)


def test_wsp_distance_linear_pair():
    u = linear_field(a=1.0)
    v = linear_field(a=2.0)
    rep = wsp_distance(u, v, UNIT, 0.5, 2, QuadratureSpec(grid_n=512))
    assert rep.value == pytest.approx(math.sqrt(1.0 / 3.0) + 1.0, rel=0.02)


def test_wsp_triangle_inequality():
    rng = np.random.default_rng(3)
    spec = QuadratureSpec(grid_n=128)
    for _ in range(5):
        coeffs = rng.normal(size=(3, 2))
        fields = [linear_field(a=c[0], b=c[1]) for c in coeffs]
        d = lambda a, b: wsp_distance(fields[a], fields[b], UNIT, 0.5, 2, spec).value
        assert d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9


def _piecewise_linear(rng):
    knots = np.sort(np.concatenate([[0.0, 1.0], rng.random(3)]))
    vals = rng.normal(size=knots.size)

    def fn(x):
        return np.interp(x[:, 0], knots, vals)[:, None]

    return Field(UNIT, 1, fn, name="pw-linear")


def test_decomposition_delta_linear():
    cover = [Box(np.array([0.0]), np.array([0.6])), Box(np.array([0.4]), np.array([1.0]))]
    rep = check_decomposition_delta(linear_field(), cover, 0.1, 0.5, 2,
                                    QuadratureSpec(grid_n=256))
    assert rep["pass"]
    assert rep["constant_used"] == pytest.approx(2**2 * sphere_area(1) / (0.5 * 2))


def test_decomposition_delta_constant():
    u = seed_field("constant", m=1, value=5.0, domain=UNIT)
    cover = [Box(np.array([0.0]), np.array([0.6])), Box(np.array([0.4]), np.array([1.0]))]
    rep = check_decomposition_delta(u, cover, 0.1, 0.5, 2, QuadratureSpec(grid_n=128))
    assert rep["lhs"] == 0.0
    assert rep["pass"]


def test_decomposition_delta_random_sweep():
    cover = [Box(np.array([0.0]), np.array([0.6])), Box(np.array([0.4]), np.array([1.0]))]
    spec = QuadratureSpec(grid_n=256)
    passes = 0
    for seed in range(20):
        u = _piecewise_linear(np.random.default_rng(seed))
        for delta in (0.05, 0.1):
            rep = check_decomposition_delta(u, cover, delta, 0.5, 2, spec)
            passes += rep["pass"]
    assert passes == 40


def test_annulus_constant_field():
    u = seed_field("constant", m=2, value=1.0, domain=Box.cube(2.0, 2))
    rep = check_decomposition_annulus(u, Box.cube(1.0, 2), 0.5, 0.5, 2,
                                      QuadratureSpec(grid_n=24))
    assert rep["lhs"] == 0.0 and rep["pass"]


def test_annulus_supported_inside():
    dom = Box.cube(2.0, 2)
    u = seed_field("smooth_bump", m=2, domain=dom, width=0.4)
    rep = check_decomposition_annulus(u, Box.cube(1.0, 2), 0.5, 0.5, 2,
                                      QuadratureSpec(grid_n=24), Omega=dom)
    assert rep["pass"]
    assert rep["measured_ratio"] <= rep["constant_used"]


def test_annulus_ratio_grows_toward_one():
    dom = Box.cube(2.0, 2)
    u = Field(dom, 1, lambda x: np.tanh(3 * x[:, :1]) * np.cos(2 * x[:, 1:2]))
    spec = QuadratureSpec(grid_n=24)
    ratios = []
    for lam in (0.25, 0.6, 0.9):
        rep = check_decomposition_annulus(u, Box.cube(1.0, 2), lam, 0.5, 2, spec,
                                          Omega=dom)
        ratios.append(rep["measured_ratio"])
        assert rep["pass"]
    assert ratios[0] < ratios[-1]


def test_interpolation_linear():
    rep = check_interpolation(linear_field(), UNIT, UNIT, 0.5, 2, 2, 2,
                              QuadratureSpec(grid_n=512))
    assert rep["lhs"] == pytest.approx(1.0, rel=0.02)
    assert rep["rhs_factor"] == pytest.approx((1.0 / 3.0) ** 0.25, rel=0.02)
    assert rep["measured_constant"] == pytest.approx(3.0 ** 0.25, rel=0.05)


def test_interpolation_constant():
    u = seed_field("constant", m=1, value=2.0, domain=UNIT)
    rep = check_interpolation(u, UNIT, UNIT, 0.5, 2, 2, 2, QuadratureSpec(grid_n=128))
    assert rep["lhs"] == 0.0
    assert rep["pass"]


def test_interpolation_shrinking_omega():
    u = Field(UNIT, 1, lambda x: np.sin(2 * x[:, :1]))
    spec = QuadratureSpec(grid_n=256)
    lhs = []
    for w in (1.0, 0.5, 0.25):
        omega = Box(np.array([0.5 - w / 2]), np.array([0.5 + w / 2]))
        lhs.append(check_interpolation(u, omega, UNIT, 0.5, 2, 2, 2, spec)["lhs"])
    assert lhs[0] > lhs[1] > lhs[2]


@given(st.floats(min_value=0.1, max_value=0.9), st.floats(min_value=-2, max_value=2))
@settings(max_examples=20, deadline=None)
def test_gagliardo_linear_scaling_property(sigma, a):
    # |a*u| seminorm = |a| * seminorm(u), and the closed form for u(x)=x
    spec = QuadratureSpec(grid_n=128)
    rep = gagliardo_seminorm(linear_field(a=a), UNIT, sigma, 2, spec)
    base = math.sqrt(gagliardo_power_oracle(sigma, 2))
    assert rep.value == pytest.approx(abs(a) * base, rel=0.05, abs=1e-9)


def test_norm_report_roundtrip():
    rep = lp_norm(linear_field(), UNIT, 2, QuadratureSpec(grid_n=64))
    d = rep.to_dict()
    assert d["spec"]["grid_n"] == 64
    assert d["value"] == rep.value
