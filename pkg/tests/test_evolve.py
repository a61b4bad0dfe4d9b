import numpy as np
import pytest

from helpers import BSIN, ONE, ZERO, fld
from xformlab.corelab import Role, Sigma, make_grids, sample_coefficient
from xformlab.errors import ValidationError
from xformlab.evolve import (
    BoundaryConditionSpec,
    DirichletZero,
    NeumannZero,
    PrescribedTrace,
    cauchy_to_csv,
    evolution_to_csv,
    extract_cauchy_trace,
    forward_solve,
    pde_residual,
    residual_scale,
)

DIRICHLET = BoundaryConditionSpec()


def single_mode(n=128, m=128, sigma=Sigma(1.0), horizon=0.25, c=0.0):
    sgrid, tgrid = make_grids(1.0, horizon, n, m)
    a = fld(ONE, sgrid, Role.DIFFUSION)
    p = fld(lambda x: np.full_like(x, c), sgrid, Role.POTENTIAL_P)
    b = fld(BSIN, sgrid, Role.INITIAL)
    u = forward_solve(sigma, a, p, b, DIRICHLET, tgrid)
    return sgrid, tgrid, a, p, b, u


def test_parabolic_mode_value():
    sgrid, tgrid, *_, u = single_mode(horizon=0.2)
    k = np.argmin(np.abs(tgrid.nodes - 0.1))
    j = sgrid.n // 2
    expect = np.exp(-np.pi**2 * 0.1) * np.sin(np.pi * 0.5)
    assert u.values[k, j].real == pytest.approx(expect, abs=3e-5)
    assert abs(u.values[k, j].imag) < 1e-14


def test_schrodinger_phase_only():
    *_, u = single_mode(sigma=Sigma(0.0, 1.0))
    mags = np.abs(u.values)
    assert np.max(np.abs(mags - mags[0])) < 1e-12


def test_constant_potential_shifts_decay():
    sgrid, tgrid, *_, u = single_mode(horizon=0.2, c=2.0)
    k = np.argmin(np.abs(tgrid.nodes - 0.1))
    j = sgrid.n // 2
    expect = np.exp(-(np.pi**2 + 2.0) * 0.1)
    assert u.values[k, j].real == pytest.approx(expect, abs=3e-5)


def test_trace_matches_analytic_slope():
    sgrid, tgrid, *_, u = single_mode()
    trace = extract_cauchy_trace(u)
    expect = np.pi * np.exp(-np.pi**2 * tgrid.nodes)
    assert np.max(np.abs(trace.ux0.real - expect)) < 5e-3
    assert np.max(np.abs(trace.u0)) < 1e-12


def test_neumann_left_slope_vanishes():
    sgrid, tgrid = make_grids(1.0, 0.25, 64, 64)
    a = fld(ONE, sgrid, Role.DIFFUSION)
    p = fld(ZERO, sgrid, Role.POTENTIAL_P)
    b = fld(lambda x: np.cos(np.pi * x / 2), sgrid, Role.INITIAL)
    u = forward_solve(Sigma(1.0), a, p, b, BoundaryConditionSpec(left=NeumannZero()), tgrid)
    trace = extract_cauchy_trace(u)
    assert np.max(np.abs(trace.ux0)) < 50 * sgrid.h**2


def test_stencil_against_fine_grid_oracle():
    # random smooth field; one-sided stencil vs centered difference on a
    # ghost-extended fine sampling of the same function
    rng = np.random.default_rng(3)
    coef = rng.standard_normal(4)
    f = lambda x: coef[0] + coef[1] * np.sin(x) + coef[2] * np.cos(2 * x) + coef[3] * x**2  # noqa: E731
    fprime = lambda x: coef[1] * np.cos(x) - 2 * coef[2] * np.sin(2 * x) + 2 * coef[3] * x  # noqa: E731
    errs = []
    for n in (32, 64):
        x = np.linspace(0.0, 1.0, n + 1)
        h = x[1] - x[0]
        stencil = (-3 * f(x[0]) + 4 * f(x[1]) - f(x[2])) / (2 * h)
        hf = h / 64.0
        oracle = (f(hf) - f(-hf)) / (2 * hf)
        assert oracle == pytest.approx(fprime(0.0), abs=1e-8)
        errs.append(abs(stencil - oracle))
    assert errs[1] < errs[0] / 3.0  # second order


def test_pde_residual_convergence_and_zero_field():
    res = []
    for n in (64, 128):
        sgrid, tgrid, a, p, b, u = single_mode(n=n, m=n)
        res.append(pde_residual(u, Sigma(1.0), a, p))
    ratio = res[0] / res[1]
    assert 3.2 <= ratio <= 4.8

    sgrid, tgrid = make_grids(1.0, 0.25, 16, 16)
    a = fld(ONE, sgrid, Role.DIFFUSION)
    p = fld(ZERO, sgrid, Role.POTENTIAL_P)
    zero_field = forward_solve(Sigma(1.0), a, p, fld(ZERO, sgrid, Role.INITIAL),
                               DIRICHLET, tgrid)
    assert pde_residual(zero_field, Sigma(1.0), a, p) == 0.0


def test_exact_mode_sampled_residual():
    sgrid, tgrid = make_grids(1.0, 0.25, 64, 64)
    tt, xx = np.meshgrid(tgrid.nodes, sgrid.nodes, indexing="ij")
    exact = np.exp(-np.pi**2 * tt) * np.sin(np.pi * xx)
    from xformlab.corelab import EvolutionField

    u = EvolutionField(sgrid, tgrid, exact)
    a = fld(ONE, sgrid, Role.DIFFUSION)
    p = fld(ZERO, sgrid, Role.POTENTIAL_P)
    r = pde_residual(u, Sigma(1.0), a, p)
    assert r < 20 * (tgrid.dt**2 + sgrid.h**2) * residual_scale(u, Sigma(1.0), a, p)


def test_linearity_machine_precision():
    sgrid, tgrid = make_grids(1.0, 0.25, 32, 32)
    a = fld(ONE, sgrid, Role.DIFFUSION)
    p = fld(lambda x: 1 + x, sgrid, Role.POTENTIAL_P)
    b1 = fld(BSIN, sgrid, Role.INITIAL)
    b2 = fld(lambda x: x * (1 - x), sgrid, Role.INITIAL)
    alpha, beta = 2.0, -0.5
    combo = fld(lambda x: alpha * np.sin(np.pi * x) + beta * x * (1 - x), sgrid, Role.INITIAL)
    u1 = forward_solve(Sigma(1.0), a, p, b1, DIRICHLET, tgrid)
    u2 = forward_solve(Sigma(1.0), a, p, b2, DIRICHLET, tgrid)
    uc = forward_solve(Sigma(1.0), a, p, combo, DIRICHLET, tgrid)
    assert np.max(np.abs(uc.values - alpha * u1.values - beta * u2.values)) < 1e-12


def test_parabolic_max_nonincreasing():
    *_, u = single_mode(n=64, m=64, horizon=0.5)
    maxes = np.max(np.abs(u.values), axis=1)
    assert np.all(np.diff(maxes) <= 1e-10)


def test_schrodinger_l2_conserved():
    sgrid, tgrid, *_ , u = single_mode(sigma=Sigma(0.0, 1.0), horizon=1.0, c=0.5)
    norms = np.sqrt(np.sum(np.abs(u.values) ** 2, axis=1) * sgrid.h)
    assert np.max(np.abs(norms - norms[0])) < 1e-10 * tgrid.horizon


def test_refinement_halves_error_by_four():
    errs = []
    for n in (64, 128):
        sgrid, tgrid, *_ , u = single_mode(n=n, m=n)
        tt, xx = np.meshgrid(tgrid.nodes, sgrid.nodes, indexing="ij")
        exact = np.exp(-np.pi**2 * tt) * np.sin(np.pi * xx)
        errs.append(np.max(np.abs(u.values - exact)))
    assert 3.2 <= errs[0] / errs[1] <= 4.8


def test_backward_sigma_rejected():
    sgrid, tgrid = make_grids(1.0, 0.25, 16, 16)
    a = fld(ONE, sgrid, Role.DIFFUSION)
    p = fld(ZERO, sgrid, Role.POTENTIAL_P)
    b = fld(BSIN, sgrid, Role.INITIAL)
    with pytest.raises(ValidationError, match="backward"):
        forward_solve(Sigma(-1.0), a, p, b, DIRICHLET, tgrid)


def test_prescribed_trace_length_checked():
    sgrid, tgrid = make_grids(1.0, 0.25, 16, 16)
    a = fld(ONE, sgrid, Role.DIFFUSION)
    p = fld(ZERO, sgrid, Role.POTENTIAL_P)
    b = fld(BSIN, sgrid, Role.INITIAL)
    bc = BoundaryConditionSpec(left=PrescribedTrace(np.zeros(5)))
    with pytest.raises(ValidationError, match="length"):
        forward_solve(Sigma(1.0), a, p, b, bc, tgrid)


def test_prescribed_trace_enforced():
    sgrid, tgrid = make_grids(1.0, 0.25, 32, 32)
    a = fld(ONE, sgrid, Role.DIFFUSION)
    p = fld(ZERO, sgrid, Role.POTENTIAL_P)
    b = fld(BSIN, sgrid, Role.INITIAL)
    series = 0.1 * np.sin(2 * np.pi * tgrid.nodes)
    bc = BoundaryConditionSpec(left=PrescribedTrace(series))
    u = forward_solve(Sigma(1.0), a, p, b, bc, tgrid)
    assert np.max(np.abs(u.values[1:, 0] - series[1:])) < 1e-14


def test_grid_mismatch_rejected():
    sgrid, tgrid = make_grids(1.0, 0.25, 16, 16)
    other = make_grids(1.0, 0.25, 32, 32)[0]
    a = fld(ONE, sgrid, Role.DIFFUSION)
    p = fld(ZERO, other, Role.POTENTIAL_P)
    b = fld(BSIN, sgrid, Role.INITIAL)
    with pytest.raises(ValidationError, match="grids"):
        forward_solve(Sigma(1.0), a, p, b, DIRICHLET, tgrid)


def test_csv_exports(tmp_path):
    sgrid, tgrid, *_ , u = single_mode(n=8, m=8)
    evolution_to_csv(u, tmp_path / "field.csv")
    lines = (tmp_path / "field.csv").read_text().splitlines()
    assert lines[0] == "t,x,re,im"
    assert len(lines) == 1 + 9 * 9

    cauchy_to_csv(extract_cauchy_trace(u), tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "t,re_u0,im_u0,re_ux0,im_ux0"
    assert len(lines) == 1 + 9
