try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np
import pytest

from conftest import CONFIG_DIR, small_config_data
from ndgd.config import parse_config
from ndgd.engine import ScheduleInfeasibleError
from ndgd.experiments import (
    BuildError,
    ExperimentRunner,
    build_components,
    build_problem,
    resolve_init,
    schedule_for,
)
from ndgd.models import Algorithm, ParameterError, Schedule, SpectralSummary, StepParameters


def test_build_problem(small_config):
    problem = build_problem(small_config)
    assert (problem.m, problem.n) == (6, 2)
    assert problem.graph.m == 6 and np.all(problem.graph.degrees == 2)
    assert problem.x0.shape == (6, 2)
    np.testing.assert_allclose(problem.x0[3], [1.0 - 1e-5, 1e-5])
    assert problem.params == StepParameters(alpha=0.2, sigma=0.05)
    # a six-cycle needs rho >= 4, so the reported schedule exists at rho = 6
    assert isinstance(problem.schedule, Schedule)


def test_schedule_mode_uses_derived_steps(tmp_path):
    config = parse_config(small_config_data(tmp_path, step="schedule", rho=6.0))
    problem = build_problem(config)
    assert problem.params is problem.schedule
    assert problem.params.alpha == pytest.approx(problem.w.lambda_min / (problem.constants.grad_lipschitz * np.sqrt(6)))


def test_schedule_mode_infeasible(tmp_path):
    config = parse_config(small_config_data(tmp_path, step="schedule", rho=1.0))
    with pytest.raises(ScheduleInfeasibleError) as info:
        build_problem(config)
    assert info.value.required_rho == pytest.approx(4.0)


def test_manual_mode_tolerates_missing_schedule(tmp_path):
    problem = build_problem(parse_config(small_config_data(tmp_path, rho=1.0)))
    assert problem.schedule is None
    assert problem.params.alpha == 0.2


def test_schedule_for_with_overrides(small_config):
    parts = build_components(small_config)
    base = schedule_for(parts, 6.0)
    wider = schedule_for(parts, 6.0, spectrum=SpectralSummary(lambda_min=0.5, lambda_2=0.5))
    assert wider.alpha > base.alpha
    assert base.K is not None  # the quartic has a finite lower bound
    same = schedule_for(parts, 6.0, spectrum=parts.w.spectrum)
    assert (same.alpha, same.zeta) == (base.alpha, base.zeta)


@pytest.mark.parametrize(
    "init, expected",
    [
        ([0.5, -0.5], np.tile([0.5, -0.5], (6, 1))),
        (list(np.arange(12.0)), np.arange(12.0).reshape(6, 2)),
    ],
)
def test_resolve_explicit_init(tmp_path, init, expected):
    config = parse_config(small_config_data(tmp_path, init=init))
    parts = build_components(config)
    np.testing.assert_array_equal(resolve_init(config, parts.obj), expected)


def test_resolve_init_rejects_wrong_size(tmp_path):
    with pytest.raises(BuildError):
        build_components(parse_config(small_config_data(tmp_path, init=[1.0, 2.0, 3.0])))


def test_logistic_named_inits(tmp_path):
    data = {
        "experiment": {"kind": "logistic", "m": 5, "graph": "ring"},
        "objective": {"constant_samples": 200},
        "run": {"init": "saddle_manifold"},
        "output": {"directory": str(tmp_path)},
    }
    parts = build_components(parse_config(data))
    np.testing.assert_array_equal(parts.x0, np.tile([-1.0, 1.0], (5, 1)))


def test_custom_factory(tmp_path):
    data = {
        "experiment": {"kind": "custom", "m": 3, "graph": "complete"},
        "objective": {
            "factory": "ndgd.objectives:make_quadratic",
            "params": {"matrices": [np.eye(2).tolist()] * 3, "offsets": [[0.0, 1.0]] * 3},
            "constant_samples": 100,
        },
        "run": {"init": [0.2, 0.2]},
        "output": {"directory": str(tmp_path)},
    }
    parts = build_components(parse_config(data))
    assert parts.obj.m == 3

    data["experiment"]["m"] = 4
    with pytest.raises(BuildError):
        build_components(parse_config(data))


def test_runner_rows_and_determinism(small_config):
    first = ExperimentRunner(small_config).run()
    second = ExperimentRunner(small_config).run()
    assert len(first.rows) == 4
    assert [r.algorithm for r in first.rows] == [Algorithm.DGD] * 2 + [Algorithm.NDGD] * 2
    for alg in (Algorithm.DGD, Algorithm.NDGD):
        assert [t.digest() for t in first.traces[alg]] == [t.digest() for t in second.traces[alg]]

    dgd = first.traces[Algorithm.DGD]
    ndgd = first.traces[Algorithm.NDGD]
    np.testing.assert_array_equal(dgd[0].final.data, dgd[1].final.data)
    assert not np.array_equal(ndgd[0].final.data, ndgd[1].final.data)
    assert ndgd[0].stream == (1, 0) and ndgd[1].stream == (1, 1)


def test_threaded_repeats_match_sequential(tmp_path):
    sequential = ExperimentRunner(parse_config(small_config_data(tmp_path, workers=1))).run()
    threaded = ExperimentRunner(parse_config(small_config_data(tmp_path, workers=2))).run()
    for alg in sequential.traces:
        assert [t.digest() for t in sequential.traces[alg]] == [t.digest() for t in threaded.traces[alg]]


def test_stationarity_stop_needs_thresholds_without_schedule(tmp_path):
    config = parse_config(small_config_data(tmp_path, rho=1.0, stop_on_stationarity=True))
    with pytest.raises(BuildError):
        ExperimentRunner(config).run()


def test_median_escape_counts_missing_as_never(small_config):
    result = ExperimentRunner(small_config).run()
    for row in result.rows:
        row.half = None
    assert result.median_escape(Algorithm.NDGD) is None
    assert result.escape_rate(Algorithm.NDGD) == 0.0


def test_escape_summaries_reject_other_fractions(small_config):
    result = ExperimentRunner(small_config).run()
    assert result.escape_rate(Algorithm.NDGD, 0.1) >= result.escape_rate(Algorithm.NDGD, 0.5)
    with pytest.raises(ParameterError):
        result.median_escape(Algorithm.NDGD, 0.3)
    with pytest.raises(ParameterError):
        result.escape_rate(Algorithm.DGD, 0.3)


def _shipped_config(name, tmp_path, **run):
    with (CONFIG_DIR / name).open("rb") as fh:
        data = tomllib.load(fh)
    data["run"].update(run)
    data["output"]["directory"] = str(tmp_path / "out")
    return parse_config(data)


@pytest.mark.slow
def test_quartic_dgd_stays_on_the_saddle_manifold(tmp_path):
    config = _shipped_config("quartic.toml", tmp_path, init="saddle_manifold")
    result = ExperimentRunner(config).run()
    assert result.escape_rate(Algorithm.DGD) == 0.0
    assert result.escape_rate(Algorithm.NDGD) == 1.0


@pytest.mark.slow
def test_logistic_ndgd_escapes_first_and_settles(tmp_path):
    result = ExperimentRunner(_shipped_config("logistic.toml", tmp_path)).run()
    ndgd = result.median_escape(Algorithm.NDGD)
    dgd = result.median_escape(Algorithm.DGD)
    assert ndgd is not None
    assert dgd is None or ndgd < dgd

    rows = [r for r in result.rows if r.algorithm is Algorithm.NDGD]
    assert max(r.final_consensus for r in rows) <= 0.1
    assert max(r.final_distance for r in rows) <= 0.15
