import math
from fractions import Fraction

import numpy as np
import pytest

from ndgd.engine import (
    DivergenceError,
    ScheduleInfeasibleError,
    build_schedule,
    check_consensual_first_order,
    check_consensual_stationarity,
    create_engine,
    dgd_step,
    escape_iteration,
    gdq_step,
    ndgd_step,
    required_rho,
    run,
    run_many,
    sample_perturbation,
    theorem_thresholds,
)
from ndgd.models import (
    Algorithm,
    LiftedPoint,
    ParameterError,
    RunConfig,
    RunTrace,
    SpectralSummary,
    StepParameters,
    TraceRecord,
)
from ndgd.objectives import make_quartic
from ndgd.streams import make_rng
from ndgd.topology import complete_graph, lazy_metropolis_mixing


# ---------------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------------


def test_schedule_step_size(reference_constants, half_spectrum):
    schedule = build_schedule(4.0, reference_constants, half_spectrum, m=20, n=2)
    assert schedule.alpha == pytest.approx(1 / 24)
    assert schedule.contraction == pytest.approx(0.75)
    assert schedule.sigma == pytest.approx(schedule.alpha / (40 * math.sqrt(40) * 50 * 64))
    assert schedule.eps_g == pytest.approx(math.sqrt(schedule.alpha))
    assert schedule.r == math.ceil(schedule.alpha**-1.5 * 4)
    assert schedule.K is None  # no finite lower bound on f


def test_schedule_decreases_with_rho(reference_constants, half_spectrum):
    schedules = [build_schedule(rho, reference_constants, half_spectrum, 20, 2) for rho in (4, 16, 64, 256)]
    for a, b in zip(schedules, schedules[1:]):
        assert b.alpha < a.alpha
        assert b.sigma < a.sigma
        assert b.zeta < a.zeta


def test_infeasible_schedule_reports_required_rho(reference_constants):
    spectrum = SpectralSummary(lambda_min=0.5, lambda_2=0.6)
    with pytest.raises(ScheduleInfeasibleError) as info:
        build_schedule(1.2, reference_constants, spectrum, 20, 2)
    assert info.value.required_rho == pytest.approx(1.5625)
    assert build_schedule(1.6, reference_constants, spectrum, 20, 2).contraction < 1
    assert required_rho(0.25, 0.75) == pytest.approx(1.0)
    assert required_rho(0.5, 0.9) == pytest.approx(25.0)


def test_schedule_rejects_rho_below_one(reference_constants, half_spectrum):
    with pytest.raises(ParameterError):
        build_schedule(0.5, reference_constants, half_spectrum, 20, 2)


def test_horizon_is_exact(reference_constants, half_spectrum):
    schedule = build_schedule(4.0, reference_constants, half_spectrum, 20, 2, q0=3.0, f_star_sum=-1.0)
    expected = math.ceil(Fraction(4.0) * Fraction(schedule.alpha) ** -4 * Fraction(4.0) ** 5)
    assert schedule.K == expected
    assert schedule.log10_K == pytest.approx(math.log10(expected), abs=1e-9)
    assert schedule.as_dict()["K"] == str(expected)


def test_schedule_derived_quantities(reference_constants, half_spectrum):
    s = build_schedule(16.0, reference_constants, half_spectrum, 20, 2)
    assert s.lq_g == pytest.approx(6.0 + 0.5 / s.alpha)
    assert s.lq_h == pytest.approx(50.0)
    eta, eps, gamma = theorem_thresholds(s)
    assert eta == s.zeta
    assert eps == pytest.approx(math.sqrt(20 * s.alpha))
    assert gamma == pytest.approx(20 * math.sqrt(50 * math.sqrt(s.alpha)))
    assert s.minimizer_radius(1.0) > 0


def test_noise_spread_grows_geometrically(reference_constants, half_spectrum):
    s = build_schedule(4.0, reference_constants, half_spectrum, 20, 2)
    ag = s.alpha * 2.0
    assert s.noise_spread(0, 2.0) == pytest.approx(2 * s.sigma / math.sqrt(2 * ag + ag**2))
    assert s.noise_spread(11, 2.0) / s.noise_spread(10, 2.0) == pytest.approx(1 + ag)
    with pytest.raises(ParameterError):
        s.noise_spread(5, 0.0)


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------


def test_dgd_is_gradient_descent_on_q(quartic, complete_w):
    x = np.random.default_rng(1).uniform(-1, 1, (10, 2))
    np.testing.assert_allclose(dgd_step(quartic, complete_w, 0.05, x), gdq_step(quartic, complete_w, 0.05, x), atol=1e-13)


def test_dgd_and_gdq_trajectories_coincide(quartic, complete_w):
    y = z = np.random.default_rng(2).uniform(-1, 1, (10, 2))
    for _ in range(1000):
        y = dgd_step(quartic, complete_w, 0.05, y)
        z = gdq_step(quartic, complete_w, 0.05, z)
    assert np.max(np.abs(y - z)) < 1e-10


def test_ndgd_without_noise_is_dgd(quartic, complete_w):
    point = LiftedPoint.from_blocks(np.random.default_rng(3).uniform(-1, 1, (10, 2)))
    noisy = ndgd_step(quartic, complete_w, 0.1, point, np.zeros(20))
    assert isinstance(noisy, LiftedPoint)
    assert np.array_equal(noisy.data, dgd_step(quartic, complete_w, 0.1, point).data)


def test_ndgd_matches_perturbed_gradient_step_on_q(quartic, complete_w):
    rng = np.random.default_rng(4)
    x = rng.uniform(-1, 1, (10, 2))
    noise = rng.standard_normal(20)
    expected = gdq_step(quartic, complete_w, 0.1, x) - 0.1 * noise.reshape(10, 2)
    np.testing.assert_allclose(ndgd_step(quartic, complete_w, 0.1, x, noise), expected, atol=1e-13)


def test_ndgd_rejects_wrong_noise_size(quartic, complete_w):
    with pytest.raises(ParameterError):
        ndgd_step(quartic, complete_w, 0.1, np.zeros((10, 2)), np.zeros(5))


def test_zero_step_preserves_the_average(quartic, ring_w):
    obj = make_quartic(quartic.coeffs[:5])
    x = np.random.default_rng(5).standard_normal((5, 2))
    np.testing.assert_allclose(dgd_step(obj, ring_w, 0.0, x).mean(axis=0), x.mean(axis=0), atol=1e-12)


def test_perturbation_sampling():
    draw = sample_perturbation(4, 3, 0.0, make_rng(0))
    assert draw.shape == (12,) and not draw.any()
    with pytest.raises(ParameterError):
        sample_perturbation(4, 3, -1.0, make_rng(0))


# ---------------------------------------------------------------------------
# Stationarity
# ---------------------------------------------------------------------------


def test_stationarity_at_a_minimizer_of_identical_components():
    obj = make_quartic(np.tile([1.0, 1.0, 1.0, -1.0], (4, 1)))
    x = np.tile(obj.minimizers[0], (4, 1))
    report = check_consensual_stationarity(obj, x, 1e-9, 1e-9, 1e-9)
    assert report.passed
    assert report.hessian_ok is True


def test_origin_fails_the_curvature_condition(quartic):
    report = check_consensual_stationarity(quartic, np.zeros((10, 2)), 1.0, 1.0, 1e-3)
    assert report.consensus_ok and report.gradient_ok
    assert report.hessian_ok is False
    assert report.lambda_min_hessian_sum == pytest.approx(2 * quartic.coeffs[:, 3].sum() / quartic.m)


def test_infinite_thresholds_always_pass(quartic):
    x = np.random.default_rng(6).uniform(-2, 2, (10, 2))
    assert check_consensual_stationarity(quartic, x, math.inf, math.inf, math.inf).passed


def test_first_order_check_leaves_curvature_unevaluated(quartic):
    report = check_consensual_first_order(quartic, np.zeros((10, 2)), 1.0, 1.0)
    assert report.hessian_ok is None
    assert report.passed
    with pytest.raises(ParameterError):
        check_consensual_first_order(quartic, np.zeros((10, 2)), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def _config(algorithm, x0, iters=200, **kwargs):
    return RunConfig(algorithm=algorithm, x0=x0, max_iters=iters, **kwargs)


def test_dgd_stays_on_the_stable_manifold(quartic, complete_w):
    trace = run(_config(Algorithm.DGD, np.array([1.0, 0.0]), 500), quartic, complete_w, StepParameters(0.1, 0.0))
    assert np.all(trace.final.blocks[:, 1] == 0.0)
    assert trace.records[-1].grad_sum_norm < 1e-3  # converging to the saddle


def test_q_decreases_along_noiseless_runs(quartic, complete_w):
    schedule = build_schedule(4.0, quartic.constants, complete_w, quartic.m, quartic.n)
    x0 = np.random.default_rng(7).uniform(-1, 1, (10, 2))
    trace = run(_config(Algorithm.DGD, x0, 300), quartic, complete_w, StepParameters(schedule.alpha, 0.0))
    assert np.all(np.diff(trace.column("q_value")) <= 1e-12)


def test_trace_layout(quartic, complete_w):
    trace = run(
        _config(Algorithm.NDGD, np.array([1.0, 0.0]), 25, record_every=10, seed=3),
        quartic,
        complete_w,
        StepParameters(0.1, 0.05),
    )
    assert trace.ks == [0, 10, 20, 25]
    assert len(trace.positions) == 4
    assert len(trace.records[0].distances) == 10
    assert trace.iterations == 25
    assert trace.sigma == 0.05


def test_runs_are_deterministic(quartic, complete_w):
    params = StepParameters(0.1, 0.05)
    a = run(_config(Algorithm.NDGD, np.array([1.0, 0.0]), seed=9), quartic, complete_w, params)
    b = run(_config(Algorithm.NDGD, np.array([1.0, 0.0]), seed=9), quartic, complete_w, params)
    c = run(_config(Algorithm.NDGD, np.array([1.0, 0.0]), seed=9, stream=(1,)), quartic, complete_w, params)
    assert a.digest() == b.digest()
    assert a.rng_digest == b.rng_digest
    assert a.digest() != c.digest()


def test_run_many_is_independent_of_worker_count(quartic, complete_w):
    config = _config(Algorithm.NDGD, np.array([1.0, 0.0]), 50, seed=4)
    params = StepParameters(0.1, 0.05)
    serial = run_many(config, quartic, complete_w, params, repeats=4, workers=1)
    parallel = run_many(config, quartic, complete_w, params, repeats=4, workers=3)
    assert [t.digest() for t in serial] == [t.digest() for t in parallel]
    assert [t.stream for t in serial] == [(0,), (1,), (2,), (3,)]
    assert len({t.digest() for t in serial}) == 4


def test_early_stop_at_stationarity():
    obj = make_quartic(np.tile([1.0, 1.0, 1.0, -1.0], (4, 1)))
    w = lazy_metropolis_mixing(complete_graph(4))
    trace = run(
        _config(Algorithm.DGD, np.array([0.5, 0.5]), 5000, stop_on_stationarity=(1e-3, 1e-3, 1e-3)),
        obj,
        w,
        StepParameters(0.1, 0.0),
    )
    assert trace.stopped_early
    assert trace.iterations < 5000


def test_schedule_budget_caps_iterations(quartic, complete_w):
    schedule = build_schedule(4.0, quartic.constants, complete_w, quartic.m, quartic.n, q0=0.0)
    assert schedule.K is not None
    engine = create_engine(quartic, complete_w, schedule)
    assert engine.budget(10**30) == schedule.K
    assert engine.budget(7) == 7


def test_q_hessian_tracking(quartic, complete_w):
    schedule = build_schedule(4.0, quartic.constants, complete_w, quartic.m, quartic.n)
    trace = run(
        _config(Algorithm.DGD, np.array([0.0, 0.5]), 20, track_q_hessian=True),
        quartic,
        complete_w,
        schedule,
    )
    assert all(r.lmin_hess_q is not None for r in trace.records)


def test_divergence_keeps_the_finite_prefix(quartic, complete_w):
    with pytest.raises(DivergenceError) as info:
        run(_config(Algorithm.DGD, np.array([2.0, 2.0]), 100), quartic, complete_w, StepParameters(10.0, 0.0))
    trace = info.value.trace
    assert trace.records
    assert trace.final.is_finite()
    assert trace.iterations < 100


def test_engine_rejects_mismatched_inputs(quartic, ring_w):
    with pytest.raises(ParameterError):
        create_engine(quartic, ring_w, StepParameters(0.1, 0.0))


def test_escape_iteration_on_a_synthetic_trace():
    distances = [(1.0, 2.0), (0.6, 0.9), (0.4, 0.9), (0.3, 0.8), (0.05, 0.1)]
    trace = RunTrace(algorithm=Algorithm.DGD, seed=0, stream=(), alpha=0.1, sigma=0.0)
    for k, d in enumerate(distances):
        trace.records.append(TraceRecord(k * 10, 0.0, 0.0, 0.0, 0.0, 0.0, distances=d))
    assert escape_iteration(trace, 0.5) == 20
    assert escape_iteration(trace, 0.1) == 40
    assert escape_iteration(trace, 0.04) is None
    with pytest.raises(ParameterError):
        escape_iteration(trace, 1.5)


@pytest.mark.slow
def test_ndgd_escapes_faster_than_dgd():
    from ndgd.config import parse_config
    from ndgd.experiments import ExperimentRunner

    config = parse_config({"run": {"repeats": 5, "max_iters": 3000}, "objective": {"box": [-2.0, 2.0]}})
    result = ExperimentRunner(config).run()
    ndgd = result.median_escape(Algorithm.NDGD)
    dgd = result.median_escape(Algorithm.DGD)
    assert ndgd is not None
    assert dgd is None or ndgd < dgd


@pytest.mark.slow
def test_noise_averages_out(quartic, complete_w):
    x0 = np.random.default_rng(8).uniform(-1, 1, (10, 2))
    alpha, sigma, steps, repeats = 0.05, 1e-3, 10, 2000
    clean = run(_config(Algorithm.DGD, x0, steps), quartic, complete_w, StepParameters(alpha, 0.0))
    noisy = run_many(_config(Algorithm.NDGD, x0, steps), quartic, complete_w, StepParameters(alpha, sigma), repeats)
    finals = np.stack([t.final.blocks for t in noisy])
    spread = finals.std(axis=0) / math.sqrt(repeats)
    assert np.all(np.abs(finals.mean(axis=0) - clean.final.blocks) <= 4 * spread + 1e-12)
