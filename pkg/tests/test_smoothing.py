import numpy as np
import pytest

from mvsobolev.boxes import Box
from mvsobolev.cubication import adjacent_closure, build_cubication
from mvsobolev.errors import NoGap, RadiusOrder, TooCloseToBoundary
from mvsobolev.fields import Field, TargetManifold, seed_field
from mvsobolev.norms import QuadratureSpec
from mvsobolev.smoothing import (
    SmoothingPlan,
    adaptive_convolve,
    assemble_psi,
    ball_quadrature,
    build_mollifier,
    build_transition,
    distance_certificate,
    psi_derivative_sup,
)


def test_mollifier_basics():
    moll = build_mollifier()
    # vanishes on the unit sphere
    z = np.array([[1.0, 0.0], [0.0, -1.0]])
    assert np.allclose(moll(z), 0.0)
    # unit mass under a fine quadrature
    pts, w = Box.cube(1.0, 2).grid(192)
    assert float(np.sum(moll(pts)) * w) == pytest.approx(1.0, abs=1e-6)
    # radial symmetry under rotations
    rng = np.random.default_rng(0)
    for _ in range(5):
        theta = rng.uniform(0, 2 * np.pi)
        R = np.array([[np.cos(theta), -np.sin(theta)],
                      [np.sin(theta), np.cos(theta)]])
        x = rng.uniform(-0.9, 0.9, size=(20, 2))
        assert np.allclose(moll(x), moll(x @ R.T), atol=1e-12)


def test_ball_quadrature_symmetric():
    pts, w = ball_quadrature(2, order=8)
    assert np.allclose(np.sort(pts.ravel()), np.sort(-pts.ravel()))
    assert np.all(np.linalg.norm(pts, axis=-1) < 1.0)


@pytest.fixture()
def plan_setup():
    eta = 0.25
    K = build_cubication(Box.cube(1.0, 2), eta)
    E = K.subset({(1, 1)})
    U = adjacent_closure(K, E)
    plan = build_transition(K, U, E, eta)
    return K, U, E, plan


def test_transition_values(plan_setup):
    K, U, E, plan = plan_setup
    zeta = plan.zeta
    # zero on the core cube, one on K \ U, inside [0,1] everywhere
    core_pts = Box.from_center_radius(E.centers[0], 0.2 * K.eta).sample(
        50, np.random.default_rng(1))
    assert np.allclose(zeta(core_pts), 0.0)
    far = np.array([[-0.9, -0.9], [0.9, -0.85]])
    assert np.allclose(zeta(far), 1.0)
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 1, size=(500, 2))
    vals = zeta(pts)
    assert np.all((vals >= 0) & (vals <= 1))


def test_transition_empty_core():
    eta = 0.25
    K = build_cubication(Box.cube(1.0, 2), eta)
    E = K.subset(set())
    plan = build_transition(K, K, E, eta)
    pts = np.random.default_rng(3).uniform(-1, 1, (200, 2))
    assert np.allclose(plan.zeta(pts), 1.0)


def test_transition_no_gap():
    eta = 0.25
    K = build_cubication(Box.cube(1.0, 2), eta)
    E = K.subset({(1, 1)})
    with pytest.raises(NoGap):
        build_transition(K, E, E, eta)  # U = E leaves no room


def test_transition_scale_stability():
    sups = []
    for eta in (0.25, 0.125):
        K = build_cubication(Box.cube(1.0, 2), eta)
        E = K.subset({(1, 1)})
        U = adjacent_closure(K, E)
        plan = build_transition(K, U, E, eta)
        sups.append(plan.C_zeta)
    assert abs(sups[0] - sups[1]) / sups[0] < 0.05


def test_assemble_psi(plan_setup):
    K, U, E, plan = plan_setup
    plan = assemble_psi(plan, rho=0.2, rho_lo=0.1)
    assert plan.t == pytest.approx(
        min(plan.kappa / plan.C_zeta, 0.1) * K.eta)
    # psi equals r on the core, t far away
    core = Box.from_center_radius(E.centers[0], 0.2 * K.eta).sample(
        20, np.random.default_rng(4))
    assert np.allclose(plan.psi(core), plan.r)
    assert np.allclose(plan.psi(np.array([[-0.9, -0.9]])), plan.t)
    assert psi_derivative_sup(plan) < 1.0
    with pytest.raises(RadiusOrder):
        assemble_psi(plan, rho=0.2, rho_lo=0.1, r=plan.t * 2)


def test_convolve_constant(plan_setup):
    K, U, E, plan = plan_setup
    plan = assemble_psi(plan, rho=0.2, rho_lo=0.1)
    u = seed_field("constant", m=2, value=[0.6, 0.8], domain=Box.cube(2.0, 2))
    sm = adaptive_convolve(u, plan, build_mollifier())
    pts = np.random.default_rng(5).uniform(-1, 1, (100, 2))
    assert np.allclose(sm(pts), [0.6, 0.8], atol=1e-13)


def test_convolve_affine_exact(plan_setup):
    K, U, E, plan = plan_setup
    plan = assemble_psi(plan, rho=0.2, rho_lo=0.1)
    A = np.array([[1.0, 2.0], [-0.5, 0.3]])
    u = Field(Box.cube(2.0, 2), 2, lambda x: x @ A.T, name="affine")
    sm = adaptive_convolve(u, plan, build_mollifier())
    pts = np.random.default_rng(6).uniform(-1, 1, (100, 2))
    assert np.allclose(sm(pts), pts @ A.T, atol=1e-12)


def test_convolve_abs_1d_oracle():
    # |x| smoothed at the kink with constant radius: independent 1-d quadrature
    eta = 0.25
    K = build_cubication(Box.cube(1.0, 1), eta)
    E = K.subset(set())
    plan = build_transition(K, K, E, eta)
    plan.r, plan.t = 0.1, 0.1  # constant radius
    u = Field(Box.cube(2.0, 1), 1, lambda x: np.abs(x[:, :1]), name="abs")
    moll = build_mollifier()
    # the integrand has a kink: a high Gauss order is needed for 1e-6
    sm = adaptive_convolve(u, plan, moll, order=512)
    got = float(sm(np.array([[0.0]]))[0, 0])
    # oracle: 0.1 * int phi(z) |z| dz by dense midpoint quadrature
    z = np.linspace(-1, 1, 20001)[:, None]
    w = 2.0 / 20001
    phi = moll(z)
    expect = 0.1 * float(np.sum(phi * np.abs(z[:, 0])) * w / np.sum(phi * w))
    assert got == pytest.approx(expect, abs=1e-6)
    assert got > 0


def test_convolve_boundary_guard(plan_setup):
    K, U, E, plan = plan_setup
    plan = assemble_psi(plan, rho=0.2, rho_lo=0.1)
    u = seed_field("constant", m=2, value=1.0, domain=Box.cube(1.0, 2))
    sm = adaptive_convolve(u, plan, build_mollifier())
    with pytest.raises(TooCloseToBoundary):
        sm(np.array([[0.999, 0.999]]))


def test_convolve_smoothness_certificate(plan_setup):
    """Second differences stay bounded on shrinking stencils."""
    K, U, E, plan = plan_setup
    plan = assemble_psi(plan, rho=0.2, rho_lo=0.1)
    u = seed_field("radial_projection", m=2, domain=Box.cube(2.0, 2))
    sm = adaptive_convolve(u, plan, build_mollifier())
    x = E.centers[0].reshape(1, 2) + 0.03
    prev = None
    for h in (1e-2, 5e-3, 2.5e-3):
        d2 = sm.derivative_norm(x, order=2, h=h)[0]
        if prev is not None:
            assert d2 < 4 * prev + 10.0
        prev = d2


def test_convolve_matches_plain_convolution_where_psi_constant(plan_setup):
    K, U, E, plan = plan_setup
    plan = assemble_psi(plan, rho=0.2, rho_lo=0.1)
    u = Field(Box.cube(2.0, 2), 1,
              lambda x: np.sin(2 * x[:, :1]) * np.cos(x[:, 1:2]), name="wave")
    moll = build_mollifier()
    sm = adaptive_convolve(u, plan, moll)
    # far from U, psi = t exactly: compare with a fixed-radius convolution
    pts = np.array([[-0.8, -0.8], [0.7, -0.75]])
    nodes, wts = ball_quadrature(2, 8)
    phi = moll(nodes)
    wn = phi * wts / np.sum(phi * wts)
    direct = sum(w * u(pts + plan.t * z) for z, w in zip(nodes, wn))
    assert np.allclose(sm(pts), direct, atol=1e-12)


def test_lp_contraction_bound(plan_setup):
    K, U, E, plan = plan_setup
    plan = assemble_psi(plan, rho=0.2, rho_lo=0.1)
    u = Field(Box.cube(2.0, 2), 1, lambda x: np.sin(3 * x[:, :1]), name="s")
    sm = adaptive_convolve(u, plan, build_mollifier())
    from mvsobolev.norms import lp_norm

    region = Box.cube(1.0, 2)
    spec = QuadratureSpec(grid_n=48)
    lhs = lp_norm(sm, region, 2, spec).value
    sup_dpsi = psi_derivative_sup(plan)
    rhs = lp_norm(u, Box.cube(1.5, 2), 2, spec).value / (1 - sup_dpsi) ** 0.5
    assert lhs <= rhs * 1.01


def test_distance_certificate_constant_on_target(plan_setup):
    K, U, E, plan = plan_setup
    plan = assemble_psi(plan, rho=0.2, rho_lo=0.1)
    N = TargetManifold(nu=2, iota=1.0)
    u = seed_field("constant", m=2, value=[1.0, 0.0], domain=Box.cube(2.0, 2))
    sm = adaptive_convolve(u, plan, build_mollifier())
    regions = {"good": Box.cube(0.5, 2)}
    rep = distance_certificate(sm, u, N, regions, plan, QuadratureSpec())
    assert rep["regions"]["good"]["sup_dist"] < 1e-12
    assert rep["pass"]
