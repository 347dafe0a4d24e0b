import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frictionflow.constitutive import (MollifiedPotential, PotentialSpec, PressureLaw,
                                       j_delta)
from frictionflow.exceptions import BlowUpError, FixedPointError, MassMatrixError
from frictionflow.geometry import ChannelDomain, build_space
from frictionflow.momentum import (ProblemData, StepParams, assemble_forcing, assemble_mass,
                                   fixed_point_step, initial_projection)
from frictionflow.presets import BodyForce, SlipThreshold

DOM = ChannelDomain(2.0, 1.0, 32, 16)


def make_data(domain=DOM, n=8, delta=0.1, eps=0.05, force=None, g=None, kind="newtonian"):
    space = build_space(n, domain)
    spec = PotentialSpec(kind, mu=0.1, lam=0.05, q=1.5 if kind == "powerlaw" else 2.0)
    pot = MollifiedPotential(spec, delta, exact_quadratic=True)
    f = BodyForce("space-time-cosine", {"amplitude": force, "omega": 3.0, "k": 1}, domain) if force else None
    thr = SlipThreshold("constant", {"value": g}, domain) if g else None
    return ProblemData(space, pot, PressureLaw(1.0, 2.0), delta, eps, f, thr)


def smooth_rho(domain):
    X, Y = domain.grid()
    return 1 + 0.3 * np.cos(np.pi * Y) * np.cos(2 * np.pi * X / domain.length) + 0.1 * np.sin(2 * np.pi * X / domain.length)


# -- mass matrix -------------------------------------------------------------------


def test_mass_matrix_constant_density():
    space = build_space(8, DOM)
    assert np.max(np.abs(assemble_mass(np.ones((16, 32)), space).matrix - np.eye(8))) <= 1e-12
    assert np.max(np.abs(assemble_mass(np.full((16, 32), 2.5), space).matrix - 2.5 * np.eye(8))) <= 1e-12


def test_mass_matrix_against_refined_quadrature():
    fine_dom = DOM.refined(4)
    rho = lambda d: 1 + 0.5 * np.cos(np.pi * d.grid()[1])  # noqa: E731
    M = assemble_mass(rho(DOM), build_space(8, DOM)).matrix
    Mf = assemble_mass(rho(fine_dom), build_space(8, fine_dom)).matrix
    assert np.max(np.abs(M - Mf)) <= 1e-10


def test_mass_matrix_spectrum_and_failure():
    space = build_space(8, DOM)
    rho = smooth_rho(DOM)
    mass = assemble_mass(rho, space)
    ev = np.linalg.eigvalsh(mass.matrix)
    g = np.linalg.eigvalsh(space.gram)
    assert ev[0] >= rho.min() * g[0] - 1e-12 and ev[-1] <= rho.max() * g[-1] + 1e-12
    assert np.array_equal(mass.matrix, mass.matrix.T)
    with pytest.raises(MassMatrixError) as info:
        assemble_mass(-np.ones((16, 32)), space)
    assert info.value.min_eigenvalue < 0


# -- forcing -----------------------------------------------------------------------


def test_forcing_vanishes_at_rest():
    data = make_data()
    terms = assemble_forcing(np.full((16, 32), 1.3), np.zeros(8), data, 0.0)
    assert np.max(np.abs(terms.total)) <= 1e-12


def test_friction_off_is_exactly_zero():
    data = make_data(g=None)
    c = np.random.default_rng(0).normal(size=8)
    assert np.all(assemble_forcing(smooth_rho(DOM), c, data, 0.0).friction == 0.0)


def test_quadrature_terms_against_refined_quadrature():
    # volume and wall quadrature terms: trigonometric integrands are integrated
    # exactly, so the 4x refined rule agrees to round-off
    rng = np.random.default_rng(1)
    c = 0.2 * rng.normal(size=8)
    c[0] = 2.0  # keeps |u_t| > delta on the walls, where dj is smooth
    coarse = assemble_forcing(smooth_rho(DOM), c, make_data(force=1.0, g=0.5), 0.3)
    fine_dom = DOM.refined(4)
    fine = assemble_forcing(smooth_rho(fine_dom), c, make_data(fine_dom, force=1.0, g=0.5), 0.3)
    for name in ("viscous", "delta_gradient", "body", "friction"):
        a, b = getattr(coarse, name), getattr(fine, name)
        assert np.max(np.abs(a - b)) <= 1e-8 * max(1.0, np.abs(b).max()), name


def test_difference_terms_converge_at_second_order():
    # convection, pressure and eps terms use grid differences of rho; compare
    # successive refinements against the finest grid
    rng = np.random.default_rng(2)
    c = 0.5 * rng.normal(size=8)
    vals = {}
    for f in (1, 2, 4, 16):
        dom = ChannelDomain(2.0, 1.0, 32 * f, 16 * f)
        vals[f] = assemble_forcing(smooth_rho(dom), c, make_data(dom), 0.0)
    for name in ("convection", "pressure", "eps_term"):
        e1 = np.max(np.abs(getattr(vals[1], name) - getattr(vals[16], name)))
        e2 = np.max(np.abs(getattr(vals[2], name) - getattr(vals[16], name)))
        e4 = np.max(np.abs(getattr(vals[4], name) - getattr(vals[16], name)))
        assert e1 / e2 >= 3.0 and e2 / e4 >= 3.0, (name, e1, e2, e4)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 3.0))
def test_friction_dissipative_and_convex(seed, g):
    rng = np.random.default_rng(seed)
    data = make_data(g=g if g > 0 else None)
    c = rng.normal(size=8)
    fric = assemble_forcing(smooth_rho(DOM), c, data, 0.0).friction
    assert c @ fric <= 1e-12
    space = data.space
    w = space.trace.weights * data.slip_threshold(0.0)
    ut = space.tangential_trace(c)
    for _ in range(5):
        b = rng.normal(size=8)
        pt = space.tangential_trace(b)
        jd = lambda v: j_delta(data.delta, np.column_stack([v, np.zeros_like(v)]))  # noqa: E731
        assert b @ fric >= w @ (jd(ut) - jd(ut + pt)) - 1e-12


def test_stress_pairing_uses_symmetric_gradient():
    data = make_data(kind="powerlaw")
    space = data.space
    c = np.random.default_rng(3).normal(size=8)
    G = space.velocity_gradient(c)
    S = data.viscous.gradient(0.5 * (G + np.swapaxes(G, 1, 2)))
    gp = space.grad_phi
    dp = 0.5 * (gp + np.swapaxes(gp, 2, 3))
    a = np.einsum("pab,ipab->i", S, gp)
    b = np.einsum("pab,ipab->i", S, dp)
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.abs(a).max())


# -- projection ----------------------------------------------------------------------


def test_initial_projection_examples():
    space = build_space(8, DOM)
    rho = smooth_rho(DOM)
    for j in range(8):
        mom = rho.ravel()[:, None] * space.phi[j]
        e = np.zeros(8)
        e[j] = 1.0
        assert np.max(np.abs(initial_projection(mom, rho, space) - e)) <= 1e-10
    assert np.all(initial_projection(np.zeros((DOM.nx * DOM.ny, 2)), rho, space) == 0)
    X, Y = DOM.grid()
    mom = np.column_stack([np.sin(Y.ravel() * 3) + X.ravel(), np.cos(X.ravel()) * Y.ravel()])
    c = initial_projection(mom, rho, space)
    rhs = np.einsum("ipa,pa,p->i", space.phi, mom, space.weights)
    assert np.linalg.norm(assemble_mass(rho, space).matrix @ c - rhs) <= 1e-10


# -- stepping ----------------------------------------------------------------------


def test_rest_state_is_fixed_in_one_iteration():
    data = make_data()
    res = fixed_point_step(np.full((16, 32), 1.2), np.zeros(8), 0.0, StepParams(0.01), data)
    assert res.iterations == 1
    assert np.max(np.abs(res.coeffs)) <= 1e-15
    assert np.max(np.abs(res.rho - 1.2)) <= 1e-12


def test_contraction_improves_as_dt_shrinks():
    data = make_data(force=1.0, g=0.5)
    rho0 = smooth_rho(DOM)
    c0 = 0.3 * np.random.default_rng(4).normal(size=8)
    ratios, its = [], []
    for dt in (0.02, 0.01, 0.005, 0.0025):
        res = fixed_point_step(rho0, c0, 0.0, StepParams(dt, tol=1e-12), data)
        ratios.append(res.ratio)
        its.append(res.iterations)
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    assert all(a >= b for a, b in zip(its, its[1:]))


def test_step_conserves_mass_and_energy_sign():
    data = make_data()  # f = 0, g = 0
    rho0 = smooth_rho(DOM)
    c0 = 0.3 * np.random.default_rng(5).normal(size=8)
    res = fixed_point_step(rho0, c0, 0.0, StepParams(0.005), data)
    assert abs(res.rho.sum() - rho0.sum()) <= 1e-12 * rho0.sum()

    def energy(rho, c):
        M = assemble_mass(rho, data.space, factor=False).matrix
        return 0.5 * c @ M @ c + np.sum(data.pressure.potential(rho)) * DOM.cell_area

    assert energy(res.rho, res.coeffs) <= energy(rho0, c0) + 1e-12


def test_fixed_point_failure_and_blowup():
    data = make_data(force=1.0, g=0.5)
    rho0 = smooth_rho(DOM)
    c0 = np.random.default_rng(6).normal(size=8)
    with pytest.raises(FixedPointError) as info:
        fixed_point_step(rho0, c0, 0.0, StepParams(0.01, tol=1e-14, max_iter=2), data)
    assert info.value.iterations == 2 and info.value.last_change > 0
    with pytest.raises(BlowUpError):
        fixed_point_step(rho0, 0.1 * c0, 0.0, StepParams(0.01, blowup=1e-3), data, scale=1.0)


def test_step_params_validation():
    for kw in ({"dt": 0.0}, {"dt": 0.1, "tol": 0.0}, {"dt": 0.1, "max_iter": 0}):
        with pytest.raises(ValueError):
            StepParams(**kw)
