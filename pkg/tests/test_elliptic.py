import numpy as np
import pytest
import sympy as sp

from conftest import bump, random_vector
from modalns.elliptic import (CompatibilityError, HelmholtzSpec, OuterBC, diffusion_solve,
                              helmholtz_apply, helmholtz_solve, laplacian_stack, pressure_poisson,
                              project_divfree, projector, vector_laplacian)
from modalns.fields import (R, T, Z, ModalScalarField, ModalVectorField, ParityClass, l2_norm,
                            modal_divergence, modal_gradient, parity_violation)
from modalns.grid import AxisParity, axis_parity, make_grid
from modalns.solvers import DataFamily, build_initial

import oracles

SPECS = [HelmholtzSpec(k, m, s, axis_parity(c, k), bc)
         for k, m, c in [(0, 0, "z"), (0, 1, "r"), (1, 0, "r"), (1, 1, "z"), (2, 3, "r"), (3, 3, "z")]
         for s in (0.0, 1.0, 500.0) for bc in OuterBC]


def _weighted_mean(x, g):
    w = g.r[:, None]
    return (x * w).sum() / (w.sum() * g.Nz)


@pytest.mark.parametrize("spec", SPECS, ids=str)
def test_helmholtz_round_trip(spec, grid32):
    x0 = bump(grid32) * (1 + 0.3 * np.sin(2 * np.pi * grid32.z / grid32.Lz))
    rhs = helmholtz_apply(spec, x0, grid32)
    x = helmholtz_solve(spec, rhs, grid32)
    if spec.m == 0 and spec.sigma == 0 and spec.outer_bc is OuterBC.NEUMANN0:
        x0 = x0 - _weighted_mean(x0, grid32)
    assert np.abs(x - x0).max() <= 1e-10 * np.abs(x0).max()
    back = helmholtz_apply(spec, x, grid32)
    assert np.abs(back - rhs).max() <= 1e-11 * np.abs(rhs).max()


def test_residual_round_trip_random_rhs(rng, grid32):
    for spec in SPECS:
        if spec.m == 0 and spec.sigma == 0 and spec.outer_bc is OuterBC.NEUMANN0:
            continue
        rhs = rng.standard_normal(grid32.shape)
        x = helmholtz_solve(spec, rhs, grid32)
        assert np.abs(helmholtz_apply(spec, x, grid32) - rhs).max() <= 1e-11 * np.abs(rhs).max() * 10


def test_constant_rhs_far_from_walls():
    g = make_grid(64, 8, 20.0, 1.0)
    spec = HelmholtzSpec(0, 0, 1.0, AxisParity.EVEN, OuterBC.DIRICHLET0)
    x = helmholtz_solve(spec, np.full(g.shape, 2.5), g)
    assert np.abs(x[g.r < 5.0] - 2.5).max() < 1e-5
    neu = HelmholtzSpec(0, 0, 1.0, AxisParity.EVEN, OuterBC.NEUMANN0)
    np.testing.assert_allclose(helmholtz_solve(neu, np.full(g.shape, 2.5), g), 2.5, rtol=1e-13)


def _jlike(n):
    r, z = sp.symbols("r z", positive=True)
    Lz = 4
    x = r * sp.exp(-r ** 2) * sp.cos(2 * sp.pi * z / Lz)
    Lx = sp.diff(x, r, 2) + sp.diff(x, r) / r + sp.diff(x, z, 2) - x / r ** 2
    g = make_grid(n, n, 4.0, 4.0)
    rr, zz = g.mesh()
    return g, sp.lambdify((r, z), x)(rr, zz), sp.lambdify((r, z), Lx)(rr, zz)


def _wl2(f, g):
    return np.sqrt((f ** 2 * g.rr).sum() * g.dr * g.dz)


def test_manufactured_jlike_profile():
    spec = HelmholtzSpec(1, 1, 0.0, AxisParity.ODD, OuterBC.DIRICHLET0)
    sol_err, op_err = [], []
    for n in (32, 64):
        g, x, Lx = _jlike(n)
        sol = helmholtz_solve(spec, -Lx, g)
        res = helmholtz_apply(spec, sol, g) + Lx
        assert np.abs(res).max() <= 1e-12 * np.abs(Lx).max()
        sol_err.append(np.abs(sol - x).max())
        # the axis row is only first-order accurate pointwise, so the
        # operator error is measured in the weighted norm
        op_err.append(_wl2(-helmholtz_apply(spec, x, g) - Lx, g))
    assert 3.5 <= sol_err[0] / sol_err[1] <= 4.5
    assert 3.5 <= op_err[0] / op_err[1] <= 4.5


def test_incompatible_neumann_rhs_is_rejected(grid32):
    spec = HelmholtzSpec(0, 0, 0.0, AxisParity.EVEN, OuterBC.NEUMANN0)
    with pytest.raises(CompatibilityError, match="defect"):
        helmholtz_solve(spec, np.ones(grid32.shape), grid32)


def test_spec_validation():
    with pytest.raises(ValueError):
        HelmholtzSpec(0, -1, 0.0, AxisParity.EVEN)
    with pytest.raises(ValueError):
        HelmholtzSpec(0, 0, -1.0, AxisParity.EVEN)


# --- pressure -------------------------------------------------------------

def _pressure_profile(g):
    r, z = g.mesh()
    return np.exp(-((r - 1.0) ** 2) / 0.3) * np.cos(2 * np.pi * z / g.Lz) + np.exp(-r ** 2)


@pytest.mark.parametrize("k", [0, 1, 2, 5])
def test_pressure_recovery(k, grid32):
    P = _pressure_profile(grid32) * (grid32.rr ** k if k else 1.0)
    Q = 0.5 * P
    par = (float(axis_parity("pressure", k)),)
    L = lambda x: laplacian_stack(grid32, (float(k),), par, (1.0,), x[None])[0]
    Pk, Qk = pressure_poisson(k, L(P), L(Q), grid32)
    if k == 0:
        P = P - _weighted_mean(P, grid32)
        assert not Qk.any()
    else:
        np.testing.assert_allclose(Qk, Q, atol=1e-9 * np.abs(Q).max())
    np.testing.assert_allclose(Pk, P, atol=1e-9 * np.abs(P).max())


def test_pressure_zero_rhs(grid32):
    P, Q = pressure_poisson(0, np.zeros(grid32.shape), np.zeros(grid32.shape), grid32)
    assert not P.any() and not Q.any()


def test_pressure_slots_never_mix(rng, grid32):
    P, Q = pressure_poisson(2, np.zeros(grid32.shape), rng.standard_normal(grid32.shape), grid32)
    assert not P.any()
    assert np.abs(Q).max() > 0


# --- vector diffusion -----------------------------------------------------

def test_vector_laplacian_matches_analytic():
    U = oracles.mms_velocity()
    lap = oracles.cyl_vector_laplacian(U)
    errs = []
    for n in (32, 64):
        g = make_grid(n, n, 4.0, 4.0)
        nt = 10
        u = oracles.project_samples(oracles._sample(U, g, nt), g, 2)
        ref = oracles.project_samples(oracles._sample(lap, g, nt), g, 2)
        errs.append(l2_norm(vector_laplacian(u) - ref))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_diffusion_solve_round_trip(rng, grid32):
    u = random_vector(rng, grid32, 3)
    for sigma in (1.0, 1000.0):
        rhs = sigma * u - vector_laplacian(u)
        back = diffusion_solve(rhs, sigma)
        assert l2_norm(back - u) <= 1e-10 * l2_norm(u)
    with pytest.raises(ValueError):
        diffusion_solve(u, 0.0)


# --- projection -----------------------------------------------------------

def test_projection_is_idempotent_and_solenoidal(rng, small_grid):
    for _ in range(100):
        u = random_vector(rng, small_grid, 3)
        p1 = project_divfree(u)
        p2 = project_divfree(p1)
        assert l2_norm(p2 - p1) <= 1e-11 * l2_norm(p1)
        d = modal_divergence(p1)
        assert max(np.abs(d.cos).max(), np.abs(d.sin).max()) <= 1e-10 * l2_norm(p1)


def test_projection_annihilates_gradients(rng, grid32):
    K = 3
    proj = projector(grid32, K)
    b = bump(grid32, w=0.3)  # negligible at the wall
    phi = ModalScalarField.zeros(grid32, K)
    for k in range(K + 1):
        phi.cos[k] = rng.standard_normal() * b
        if k:
            phi.sin[k] = rng.standard_normal() * b
    for grad in (proj.gradient(phi), modal_gradient(phi)):
        assert l2_norm(project_divfree(grad)) <= 1e-10 * l2_norm(grad)


def test_projection_keeps_divergence_free_data():
    g = make_grid(48, 64, 4.0, 4.0)
    u = build_initial(DataFamily().profiles(g), 0.5, g, 4)
    assert l2_norm(u - project_divfree(u)) <= 1e-12 * l2_norm(u)
    # an analytic stream-function field is solenoidal only up to truncation error
    r, z = g.mesh()
    e = np.exp(-((r - 1.5) ** 2 + (z - 2.0) ** 2) / 0.25)
    v = ModalVectorField.zeros(g, 0)
    v.cos[R, 0] = 8.0 * r * (z - 2.0) * e
    v.cos[Z, 0] = 2 * e - 8.0 * r * (r - 1.5) * e
    assert l2_norm(v - project_divfree(v)) <= 2e-2 * l2_norm(v)


def test_projection_preserves_parity_class_bitwise(rng, small_grid):
    K = 3
    u = random_vector(rng, small_grid, K)
    u.sin[[R, Z]] = 0.0
    u.cos[T] = 0.0
    p = project_divfree(u)
    assert not p.sin[[R, Z]].any() and not p.cos[T].any()
    assert parity_violation(p, ParityClass.COS_MERIDIAN_SIN_SWIRL) == 0.0


def test_projector_rejects_mismatched_field(small_grid):
    with pytest.raises(ValueError):
        projector(small_grid, 2)(ModalVectorField.zeros(small_grid, 3))
