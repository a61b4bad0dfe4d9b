import numpy as np
import pytest

from helpers import BSIN, ONE, ZERO, fld
from xformlab.corelab import CauchyTrace, CoefficientField, Role, Sigma, make_grids
from xformlab.errors import ValidationError
from xformlab.evolve import BoundaryConditionSpec, DirichletZero, NeumannZero
from xformlab.recon import (
    InverseProblemSpec,
    distinguishability_gap,
    layer_strip_reconstruct,
    local_uniqueness_check,
    objective_and_gradient,
    reconstruct,
    reconstruction_summary,
    reconstruction_to_csv,
    simulate_cauchy_data,
)

PTRUE = lambda x: 1.0 + 0.5 * np.sin(2 * np.pi * x)  # noqa: E731


def make_spec(n=32, m=32, sigma=Sigma(1.0), bcl=None, horizon=0.5, bfn=BSIN,
              noise=0.0, seed=0, anchor="0"):
    sgrid, tgrid = make_grids(1.0, horizon, n, m)
    a = fld(ONE, sgrid, Role.DIFFUSION)
    b = fld(bfn, sgrid, Role.INITIAL)
    bc = BoundaryConditionSpec(left=bcl) if bcl is not None else BoundaryConditionSpec()
    return InverseProblemSpec(sigma=sigma, a=a, b=b, bc=bc, tgrid=tgrid,
                              noise_level=noise, seed=seed, anchor=anchor)


# ---------------------------------------------------------------------------
# simulate_cauchy_data
# ---------------------------------------------------------------------------


def test_simulated_trace_matches_analytic():
    spec = make_spec(n=128, m=128, horizon=0.25)
    p0 = fld(ZERO, spec.sgrid, Role.POTENTIAL_P)
    data = simulate_cauchy_data(spec, p0)
    expect = np.pi * np.exp(-np.pi**2 * spec.tgrid.nodes)
    assert np.max(np.abs(data.ux0.real - expect)) < 5e-3
    assert np.max(np.abs(data.u0)) < 1e-12


def test_simulation_deterministic_under_seed():
    spec = make_spec(noise=0.02, seed=42)
    p0 = fld(PTRUE, spec.sgrid, Role.POTENTIAL_P)
    d1 = simulate_cauchy_data(spec, p0)
    d2 = simulate_cauchy_data(spec, p0)
    assert np.array_equal(d1.u0, d2.u0) and np.array_equal(d1.ux0, d2.ux0)


def test_noise_std_calibrated():
    clean_spec = make_spec(n=16, m=32)
    p0 = fld(PTRUE, clean_spec.sgrid, Role.POTENTIAL_P)
    clean = simulate_cauchy_data(clean_spec, p0)
    level = 0.01
    ratios = []
    for seed in range(100):
        spec = make_spec(n=16, m=32, noise=level, seed=seed)
        noisy = simulate_cauchy_data(spec, p0)
        pert = (noisy.ux0 - clean.ux0).real
        ratios.append(np.std(pert) / (level * np.max(np.abs(clean.ux0))))
    assert abs(np.mean(ratios) - 1.0) < 0.2


def test_anchor_t_requires_imaginary_sigma():
    with pytest.raises(ValidationError, match="purely imaginary"):
        make_spec(sigma=Sigma(1.0), anchor="T")


def test_nonadmissible_b_warns():
    with pytest.warns(UserWarning, match="non-simple"):
        make_spec(n=10, m=16, bfn=lambda x: (x - 0.4) ** 2)


# ---------------------------------------------------------------------------
# objective_and_gradient
# ---------------------------------------------------------------------------


def test_objective_at_truth_is_regularizer_only():
    spec = make_spec()
    p_true = fld(PTRUE, spec.sgrid, Role.POTENTIAL_P)
    data = simulate_cauchy_data(spec, p_true)
    reg = 1e-5
    j, _ = objective_and_gradient(p_true, data, spec, reg)
    dp = np.diff(p_true.values)
    reg_term = reg * float(np.sum(dp * dp)) / spec.sgrid.h
    assert j == pytest.approx(reg_term, rel=1e-10)


@pytest.mark.parametrize("sigma,bcl", [
    (Sigma(1.0), DirichletZero()),
    (Sigma(0.0, 1.0), DirichletZero()),
    (Sigma(1.0), NeumannZero()),
])
def test_gradient_matches_central_differences(sigma, bcl):
    bfn = BSIN if isinstance(bcl, DirichletZero) else (lambda x: np.cos(np.pi * x / 2))
    spec = make_spec(sigma=sigma, bcl=bcl, bfn=bfn)
    p_true = fld(PTRUE, spec.sgrid, Role.POTENTIAL_P)
    data = simulate_cauchy_data(spec, p_true)
    p_c = fld(lambda x: 0.4 + 0.3 * x, spec.sgrid, Role.POTENTIAL_P)
    _, grad = objective_and_gradient(p_c, data, spec, 1e-4)
    rng = np.random.default_rng(11)
    eps = 1e-5
    for _ in range(5):
        d = rng.standard_normal(spec.sgrid.n + 1)
        d /= np.linalg.norm(d)
        jp, _ = objective_and_gradient(p_c.with_values(p_c.values + eps * d), data, spec, 1e-4)
        jm, _ = objective_and_gradient(p_c.with_values(p_c.values - eps * d), data, spec, 1e-4)
        fd = (jp - jm) / (2 * eps)
        assert abs(fd - float(grad @ d)) / max(abs(fd), 1e-14) <= 1e-4


def test_objective_quadratic_in_perturbation():
    spec = make_spec()
    p_true = fld(PTRUE, spec.sgrid, Role.POTENTIAL_P)
    data = simulate_cauchy_data(spec, p_true)
    direction = np.zeros(spec.sgrid.n + 1)
    direction[10] = 1.0
    epsilons = np.array([1e-3, 2e-3, 4e-3, 8e-3])
    values = []
    for eps in epsilons:
        j, _ = objective_and_gradient(
            p_true.with_values(p_true.values + eps * direction), data, spec, 0.0)
        values.append(j)
    slope = np.polyfit(np.log(epsilons), np.log(values), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)


# ---------------------------------------------------------------------------
# reconstruct
# ---------------------------------------------------------------------------


def test_reconstruct_stationary_start():
    spec = make_spec()
    p0 = fld(ZERO, spec.sgrid, Role.POTENTIAL_P)
    data = simulate_cauchy_data(spec, p0)
    result = reconstruct(data, spec, 0.0, p0, p_true=p0)
    assert result.iterations == 0
    assert result.converged
    assert result.relative_l2_error is None  # truth identically zero


def test_reconstruct_recovers_small_problem():
    spec = make_spec(horizon=1.0)
    p_true = fld(PTRUE, spec.sgrid, Role.POTENTIAL_P)
    data = simulate_cauchy_data(spec, p_true)
    p0 = fld(ZERO, spec.sgrid, Role.POTENTIAL_P)
    result = reconstruct(data, spec, 1e-10, p0, p_true=p_true, max_iters=400)
    assert result.relative_l2_error < 0.2
    assert np.all(np.diff(result.objective_history) <= 1e-15)


def test_reconstruct_history_monotone_and_summary():
    spec = make_spec()
    p_true = fld(PTRUE, spec.sgrid, Role.POTENTIAL_P)
    data = simulate_cauchy_data(spec, p_true)
    p0 = fld(ZERO, spec.sgrid, Role.POTENTIAL_P)
    result = reconstruct(data, spec, 1e-8, p0, p_true=p_true, max_iters=60)
    assert np.all(np.diff(result.objective_history) <= 1e-15)
    summary = reconstruction_summary(result)
    assert set(summary) == {"iterations", "converged", "relative_l2_error",
                            "objective_history"}


def test_reg_ladder_error_decreases_to_floor():
    spec = make_spec(n=64, m=64, horizon=1.0)
    p_true = fld(PTRUE, spec.sgrid, Role.POTENTIAL_P)
    data = simulate_cauchy_data(spec, p_true)
    p0 = fld(ZERO, spec.sgrid, Role.POTENTIAL_P)
    errs = []
    for reg in (1e-9, 1e-10, 1e-11):
        res = reconstruct(data, spec, reg, p0, p_true=p_true, max_iters=400)
        errs.append(res.relative_l2_error)
    for prev, nxt in zip(errs, errs[1:]):
        assert nxt <= 1.10 * prev


def test_anchor_variants_agree_for_schrodinger():
    specT = make_spec(sigma=Sigma(0.0, 1.0), anchor="T")
    p_true = fld(lambda x: 0.5 + 0.3 * np.sin(2 * np.pi * x), specT.sgrid, Role.POTENTIAL_P)
    dataT = simulate_cauchy_data(specT, p_true)
    spec0 = make_spec(sigma=Sigma(0.0, -1.0), anchor="0")
    data0 = CauchyTrace(spec0.tgrid, dataT.u0[::-1], dataT.ux0[::-1])
    p0 = fld(ZERO, specT.sgrid, Role.POTENTIAL_P)
    rT = reconstruct(dataT, specT, 1e-10, p0, p_true=p_true, max_iters=120)
    r0 = reconstruct(data0, spec0, 1e-10, p0, p_true=p_true, max_iters=120)
    assert np.max(np.abs(rT.p_estimate.values - r0.p_estimate.values)) < 1e-8


def test_layer_stripping_runs_and_converges():
    spec = make_spec(horizon=1.0)
    p_true = fld(PTRUE, spec.sgrid, Role.POTENTIAL_P)
    data = simulate_cauchy_data(spec, p_true)
    p0 = fld(ZERO, spec.sgrid, Role.POTENTIAL_P)
    result = layer_strip_reconstruct(data, spec, 1e-9, p0, p_true=p_true,
                                     max_iters=150)
    assert result.relative_l2_error < 0.5
    assert result.iterations > 0


def test_reconstruction_csv(tmp_path):
    spec = make_spec(n=16, m=16)
    p_true = fld(PTRUE, spec.sgrid, Role.POTENTIAL_P)
    data = simulate_cauchy_data(spec, p_true)
    p0 = fld(ZERO, spec.sgrid, Role.POTENTIAL_P)
    result = reconstruct(data, spec, 1e-8, p0, p_true=p_true, max_iters=5)
    reconstruction_to_csv(result, p_true, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "x,p_true,p_estimate"
    assert len(lines) == 1 + 17


# ---------------------------------------------------------------------------
# local_uniqueness_check
# ---------------------------------------------------------------------------


def chain_fields(bfn, qfn=lambda x: 0.5 * np.ones_like(x)):
    from xformlab.corelab import SpaceGrid

    grid = SpaceGrid(1.0, 64)
    a = fld(ONE, grid, Role.DIFFUSION)
    p = fld(ZERO, grid, Role.POTENTIAL_P)
    q = fld(qfn, grid, Role.POTENTIAL_Q)
    b = fld(bfn, grid, Role.INITIAL)
    return a, p, q, b


def test_chain_trivial_when_potentials_match():
    a, p, _, b = chain_fields(lambda x: x.copy())
    q_same = CoefficientField(a.grid, p.values, Role.POTENTIAL_Q)
    report = local_uniqueness_check(a, p, q_same, b)
    assert report.chain_trivial
    assert report.epsilon_star == a.grid.ell
    assert np.all(report.lhs == 0.0)


def test_chain_simple_zero_contrast():
    a, p, q, b = chain_fields(lambda x: x.copy())
    report = local_uniqueness_check(a, p, q, b)
    assert report.hypothesis_ok
    assert report.kappa == pytest.approx(1.0, rel=1e-10)
    assert report.epsilon_star > 0.0
    # the contradiction is active straight from the origin
    inner = slice(1, 8)
    assert np.all(report.lhs[inner] > report.rhs[inner])


def test_chain_rejects_higher_order_zero():
    a, p, q, b = chain_fields(lambda x: x**2)
    report = local_uniqueness_check(a, p, q, b)
    assert not report.hypothesis_ok
    assert report.kappa == 0.0
    assert "higher-order" in report.note


def test_chain_flags_positive_b():
    a, p, q, b = chain_fields(lambda x: 1.0 + x)
    report = local_uniqueness_check(a, p, q, b)
    assert not report.hypothesis_ok
    assert "prior theory" in report.note


# ---------------------------------------------------------------------------
# distinguishability_gap
# ---------------------------------------------------------------------------


def test_gap_zero_for_equal_potentials():
    spec = make_spec(n=64, m=64, horizon=1.0)
    p = fld(ZERO, spec.sgrid, Role.POTENTIAL_P)
    q = CoefficientField(spec.sgrid, p.values, Role.POTENTIAL_Q)
    assert distinguishability_gap(p, q, spec) <= 1e-12


def test_gap_exceeds_solver_tolerance():
    spec = make_spec(n=64, m=64, horizon=1.0)
    p = fld(ZERO, spec.sgrid, Role.POTENTIAL_P)
    q = fld(ONE, spec.sgrid, Role.POTENTIAL_Q)
    gap = distinguishability_gap(p, q, spec)
    assert gap > 100.0 * (spec.tgrid.dt**2 + spec.sgrid.h**2)


def test_gap_symmetric():
    spec = make_spec(n=32, m=32)
    p = fld(ZERO, spec.sgrid, Role.POTENTIAL_P)
    q = fld(ONE, spec.sgrid, Role.POTENTIAL_Q)
    qp = CoefficientField(spec.sgrid, q.values, Role.POTENTIAL_P)
    pq = CoefficientField(spec.sgrid, p.values, Role.POTENTIAL_Q)
    assert distinguishability_gap(p, q, spec) == distinguishability_gap(qp, pq, spec)


def test_gap_shrinks_with_horizon_but_survives():
    support = lambda x: np.where(x >= 0.8, np.sin(np.pi * (x - 0.8) / 0.2) ** 2, 0.0)  # noqa: E731
    gaps = []
    for horizon in (0.05, 0.2):
        sgrid, tgrid = make_grids(1.0, horizon, 128, 64)
        a = fld(ONE, sgrid, Role.DIFFUSION)
        b = fld(BSIN, sgrid, Role.INITIAL)
        spec = InverseProblemSpec(sigma=Sigma(1.0), a=a, b=b,
                                  bc=BoundaryConditionSpec(), tgrid=tgrid)
        p = fld(ZERO, sgrid, Role.POTENTIAL_P)
        q = fld(support, sgrid, Role.POTENTIAL_Q)
        gaps.append(distinguishability_gap(p, q, spec))
    assert gaps[0] < gaps[1]
    assert gaps[0] > 10 * np.finfo(float).eps
