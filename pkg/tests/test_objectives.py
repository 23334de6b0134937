import numpy as np
import pytest

from ndgd.models import CriticalPointKind, DomainBox, LiftedPoint, ParameterError
from ndgd.objectives import (
    ObjectiveError,
    QuadraticObjective,
    av,
    check_derivatives,
    check_regularity,
    check_strict_saddle,
    classify_point,
    consensus_error,
    estimate_constants,
    find_minimizers,
    polish_minimizer,
    generate_logistic_data,
    gradient_sum,
    hessian_q,
    hessian_sum,
    load_objective_factory,
    make_logistic,
    make_quartic,
    penalty,
    q_value,
    random_quartic_coefficients,
    Q_eval,
    F_eval,
)


@pytest.fixture
def symmetric_quartic():
    # f(t) = t1^4 + t1^2 + t2^4 - t2^2
    return make_quartic([[1.0, 1.0, 1.0, -1.0], [1.0, 1.0, 1.0, -1.0]])


def test_quartic_values_and_derivatives(symmetric_quartic):
    x = np.array([0.5, -1.0])
    assert float(symmetric_quartic.f_value(x)) == pytest.approx(0.0625 + 0.25 + 1.0 - 1.0)
    np.testing.assert_allclose(symmetric_quartic.f_gradient(x), [4 * 0.125 + 1.0, -4.0 + 2.0])
    np.testing.assert_allclose(symmetric_quartic.f_hessian(x), np.diag([12 * 0.25 + 2, 12.0 - 2]))


def test_quartic_minimizers_and_lower_bound(symmetric_quartic):
    np.testing.assert_allclose(symmetric_quartic.minimizers, [[0.0, np.sqrt(0.5)], [0.0, -np.sqrt(0.5)]])
    assert symmetric_quartic.f_star_sum == pytest.approx(-0.25)
    value = float(symmetric_quartic.f_value(symmetric_quartic.minimizers[0]))
    assert value == pytest.approx(symmetric_quartic.f_star_sum)


def test_quartic_rejects_wrong_coefficient_signs():
    with pytest.raises(ParameterError):
        make_quartic([[1.0, 1.0, 1.0, 1.0]])


def test_quartic_without_componentwise_bound():
    obj = make_quartic([[2.0, 1.0, 1.0, -1.0], [-0.5, 1.0, 1.0, -1.0]])
    assert obj.f_star_sum is None


def test_quartic_origin_is_a_strict_saddle(quartic):
    assert classify_point(quartic, np.zeros(2)) is CriticalPointKind.STRICT_SADDLE
    for point in quartic.minimizers:
        assert classify_point(quartic, point) is CriticalPointKind.LOCAL_MINIMIZER
    assert classify_point(quartic, np.array([1.0, 1.0])) is CriticalPointKind.NON_STATIONARY
    assert check_strict_saddle(quartic)


def test_quartic_hessian_sum_at_origin(quartic):
    expected = 2 * quartic.coeffs[:, [1, 3]].sum(axis=0) / quartic.m
    np.testing.assert_allclose(np.diag(quartic.f_hessian(np.zeros(2))), expected)


def test_random_quartic_coefficients_are_reproducible():
    a = random_quartic_coefficients(20, seed=1)
    b = random_quartic_coefficients(20, seed=1)
    assert np.array_equal(a, b)
    assert a.shape == (20, 4)
    assert np.all(a[:, :3] >= 0.5) and np.all(a[:, 3] <= -0.5)


def test_logistic_origin_hessian_matches_closed_form(logistic):
    x, y = logistic.features[:, 0], logistic.labels
    h = logistic.origin_hessian()
    assert h[0, 1] == pytest.approx(-np.sum(y * x) / (2 * logistic.m))
    assert h[0, 0] == pytest.approx(logistic.eta)
    assert np.linalg.eigvalsh(h)[0] < 0


def test_logistic_saddle_and_minimizers(logistic):
    assert classify_point(logistic, np.zeros(2)) is CriticalPointKind.STRICT_SADDLE
    mins = logistic.minimizers
    assert len(mins) >= 1
    for point in mins:
        assert np.linalg.norm(logistic.f_gradient(point)) < 1e-9
    assert check_strict_saddle(logistic)


def test_logistic_data_generator():
    x, y = generate_logistic_data(50, seed=3, features=2)
    assert x.shape == (50, 2)
    assert set(np.unique(y)) <= {-1.0, 1.0}


def test_make_logistic_from_pairs():
    obj = make_logistic([(1.0, 1), (-0.5, -1), (2.0, 1)], eta=0.1)
    assert (obj.m, obj.n) == (3, 2)
    with pytest.raises(ParameterError):
        make_logistic([(1.0, 0)], eta=0.1)


def test_derivatives_match_finite_differences(quartic, logistic):
    for obj in (quartic, logistic):
        report = check_derivatives(obj, points=25, seed=4)
        assert report.passed, (report.max_gradient_error, report.max_hessian_error)


def test_estimated_constants_hold_on_fresh_samples(quartic):
    constants = estimate_constants(quartic, quartic.domain_box, samples=1000, seed=0)
    assert constants.grad_lipschitz > 0 and constants.disagreement > 0
    assert constants.f_star_sum == pytest.approx(quartic.f_star_sum)
    assert check_regularity(quartic, constants, samples=500, seed=99)


def test_estimated_constants_reject_mismatched_box(quartic):
    with pytest.raises(ParameterError):
        estimate_constants(quartic, DomainBox.cube(-1.0, 1.0, 3), samples=10, seed=0)


def test_find_minimizers_agrees_with_closed_form(quartic):
    np.testing.assert_allclose(find_minimizers(quartic), quartic.minimizers, atol=1e-8)


def test_polish_minimizer_reaches_gradient_floor(quartic, logistic):
    for obj in (quartic, logistic):
        for z in obj.minimizers:
            polished = polish_minimizer(obj, z + 1e-4)
            assert np.linalg.norm(obj.f_gradient(polished)) < 1e-10
            np.testing.assert_allclose(polished, z, atol=1e-7)


def test_penalty_vanishes_at_consensus(quartic, complete_w):
    blocks = np.tile([0.3, -0.7], (10, 1))
    assert consensus_error(blocks) == pytest.approx(0.0, abs=1e-12)
    assert float(penalty(complete_w, 0.1, blocks)) == pytest.approx(0.0, abs=1e-12)
    assert float(q_value(quartic, complete_w, 0.1, blocks)) == pytest.approx(float(quartic.f_value([0.3, -0.7])))
    np.testing.assert_allclose(av(blocks), [0.3, -0.7])


def test_lifted_evaluations(quartic, complete_w):
    rng = np.random.default_rng(0)
    point = LiftedPoint.from_blocks(rng.uniform(-1, 1, (10, 2)))
    value, grad, hessians = F_eval(quartic, point)
    assert grad.shape == (20,) and len(hessians) == 10
    assert value == pytest.approx(float(quartic.values(point.blocks).sum()))
    np.testing.assert_allclose(gradient_sum(quartic, point), quartic.gradients(point.blocks).sum(axis=0))

    h = hessian_q(quartic, complete_w, 0.1, point)
    np.testing.assert_allclose(h, h.T)
    q, grad_q, lmin = Q_eval(quartic, complete_w, 0.1, point)
    assert lmin == pytest.approx(np.linalg.eigvalsh(h)[0])
    assert hessian_sum(quartic, point).shape == (2, 2)


def test_step_size_must_be_positive(quartic, complete_w):
    with pytest.raises(ParameterError):
        hessian_q(quartic, complete_w, 0.0, np.zeros(20))


def test_quadratic_instance(quadratic):
    assert isinstance(quadratic, QuadraticObjective)
    assert quadratic.f_star_sum is None  # first component is indefinite
    assert classify_point(quadratic, np.zeros(2)) is CriticalPointKind.STRICT_SADDLE


def test_factory_loading():
    obj = load_objective_factory(
        "ndgd.objectives:make_quadratic",
        matrices=[[[1.0, 0.0], [0.0, 2.0]]] * 3,
        offsets=[[0.0, 1.0]] * 3,
    )
    assert (obj.m, obj.n) == (3, 2)
    np.testing.assert_allclose(obj.minimizers, [[0.0, -0.5]])


@pytest.mark.parametrize("spec", ["no_colon", "ndgd.objectives:missing", "ndgd.nothing:make"])
def test_factory_errors(spec):
    with pytest.raises(ObjectiveError):
        load_objective_factory(spec)


def test_factory_must_return_an_objective():
    with pytest.raises(ObjectiveError):
        load_objective_factory("ndgd.objectives:random_quartic_coefficients", m=3, seed=0)
