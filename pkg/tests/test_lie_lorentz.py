import math

import numpy as np
import pytest

from constants import SANITY_BETA
from errors import InvalidInputError, NotALorentzMatrixError, NotAnAlgebraElementError
from lie.lorentz import (
    ETA,
    FourVector,
    LorentzAlgebraElement,
    LorentzMatrix,
    algebra_to_matrix,
    apply,
    boost,
    exp_lorentz,
    invariants,
    lie_distance,
    lorentz_defect,
    matrix_to_algebra,
    minkowski_inner,
    project_to_algebra,
)
from linalg.core import mat_exp_series, mat_log_real


@pytest.fixture
def rng():
    return np.random.default_rng(31)


def _random_element(rng, sigma_zeta=0.2, sigma_theta=1.0):
    return LorentzAlgebraElement(rng.normal(0.0, sigma_zeta, 3), rng.normal(0.0, sigma_theta, 3))


def _assert_matches_series(e, rtol=1e-10):
    closed = exp_lorentz(e).m
    series = mat_exp_series(algebra_to_matrix(e))
    assert np.all(np.isfinite(closed))
    assert np.linalg.norm(closed - series) <= rtol * np.linalg.norm(series)


def test_generator_layout():
    m = algebra_to_matrix(LorentzAlgebraElement((1.0, 2.0, 3.0), (4.0, 5.0, 6.0)))
    expected = np.array(
        [
            [0.0, 1.0, 2.0, 3.0],
            [1.0, 0.0, -6.0, 5.0],
            [2.0, 6.0, 0.0, -4.0],
            [3.0, -5.0, 4.0, 0.0],
        ]
    )
    assert np.array_equal(m, expected)
    # generators are eta-antisymmetric
    assert np.allclose(m.T @ ETA + ETA @ m, 0.0)


def test_matrix_to_algebra_roundtrip_and_rejection():
    e = LorentzAlgebraElement((0.1, -0.2, 0.3), (1.0, 0.5, -0.25))
    back = matrix_to_algebra(algebra_to_matrix(e))
    assert np.array_equal(back.zeta, e.zeta)
    assert np.array_equal(back.theta, e.theta)
    with pytest.raises(NotAnAlgebraElementError):
        matrix_to_algebra(np.eye(4))


def test_algebra_element_rejects_bad_vectors():
    with pytest.raises(InvalidInputError):
        LorentzAlgebraElement((1.0, 2.0), (0.0, 0.0, 0.0))
    with pytest.raises(InvalidInputError):
        LorentzAlgebraElement((np.inf, 0.0, 0.0), (0.0, 0.0, 0.0))
    with pytest.raises(InvalidInputError):
        LorentzAlgebraElement.from_vector(np.zeros(5))


def test_exp_of_zero_is_identity():
    assert np.array_equal(exp_lorentz(LorentzAlgebraElement.zero()).m, np.eye(4))


def test_x_boost_sign_convention():
    gamma = 1.0 / math.sqrt(1.0 - SANITY_BETA**2)
    expected = np.eye(4)
    expected[0, 0] = expected[1, 1] = gamma
    expected[0, 1] = expected[1, 0] = -SANITY_BETA * gamma

    e = LorentzAlgebraElement((-math.atanh(SANITY_BETA), 0.0, 0.0), (0.0, 0.0, 0.0))
    assert np.allclose(exp_lorentz(e).m, expected, atol=1e-14)
    assert np.allclose(boost((SANITY_BETA, 0.0, 0.0)).m, expected, atol=1e-15)

    flipped = LorentzAlgebraElement((math.atanh(SANITY_BETA), 0.0, 0.0), (0.0, 0.0, 0.0))
    assert exp_lorentz(flipped).m[0, 1] == pytest.approx(SANITY_BETA * gamma, abs=1e-14)


def test_boost_moves_rest_frame():
    gamma = 1.0 / math.sqrt(1.0 - SANITY_BETA**2)
    moved = apply(boost((SANITY_BETA, 0.0, 0.0)), FourVector(1.0, 0.0, 0.0, 0.0))
    assert moved.t == pytest.approx(gamma, abs=1e-15)
    assert moved.x == pytest.approx(-SANITY_BETA * gamma, abs=1e-15)
    assert moved.y == 0.0 and moved.z == 0.0


def test_boost_in_arbitrary_direction_is_lorentz():
    lam = boost((0.2, -0.4, 0.5))
    defect = lorentz_defect(lam.m)
    assert defect.eta_defect <= 1e-12
    assert defect.det_defect <= 1e-12
    with pytest.raises(InvalidInputError):
        boost((0.8, 0.6, 0.1))


def test_exp_matches_series_on_worked_example():
    _assert_matches_series(LorentzAlgebraElement((0.1, 0.2, -0.3), (1.0, -0.5, 0.25)))


def test_exp_matches_scipy(rng):
    scipy_linalg = pytest.importorskip("scipy.linalg")
    for _ in range(50):
        e = _random_element(rng)
        expected = scipy_linalg.expm(algebra_to_matrix(e))
        assert np.allclose(exp_lorentz(e).m, expected, atol=1e-12)


def test_exp_matches_series_on_random_elements(rng):
    for _ in range(2000):
        _assert_matches_series(_random_element(rng))


@pytest.mark.slow
def test_exp_matches_series_on_many_random_elements(rng):
    for _ in range(10_000):
        _assert_matches_series(_random_element(rng))


@pytest.mark.parametrize("scale", [10.0**-k for k in range(2, 13)])
def test_exp_lightlike_family(scale):
    # |theta| = |zeta| with theta . zeta = 0 gives a = b = 0
    _assert_matches_series(LorentzAlgebraElement((scale, 0.0, 0.0), (0.0, scale, 0.0)), rtol=1e-9)
    _assert_matches_series(
        LorentzAlgebraElement((scale, 0.0, 0.0), (0.0, scale * (1.0 + 1e-3), 0.0)), rtol=1e-9
    )


@pytest.mark.parametrize("scale", [10.0**-k for k in range(0, 13, 2)])
def test_exp_pure_boost_and_pure_rotation(scale):
    _assert_matches_series(LorentzAlgebraElement((0.3 * scale, -0.4 * scale, 0.5 * scale), (0.0, 0.0, 0.0)))
    _assert_matches_series(LorentzAlgebraElement((0.0, 0.0, 0.0), (-scale, 0.2 * scale, 0.7 * scale)))


def test_exp_near_series_cutoff():
    for a in (0.5e-2, 0.99e-2, 1.01e-2, 2e-2):
        _assert_matches_series(LorentzAlgebraElement((0.0, 0.0, 0.0), (a, 0.0, 0.0)))
        _assert_matches_series(LorentzAlgebraElement((a, 0.0, 0.0), (0.0, 0.0, 0.0)))
        _assert_matches_series(LorentzAlgebraElement((0.3, 0.0, 0.0), (0.0, 0.3 + a, 0.0)))


def test_exp_determinant_is_one(rng):
    for _ in range(1000):
        m = exp_lorentz(_random_element(rng)).m
        assert abs(np.linalg.det(m) - 1.0) <= 1e-13


def test_exp_results_pass_lorentz_defect(rng):
    for _ in range(200):
        defect = lorentz_defect(exp_lorentz(_random_element(rng)).m)
        assert defect.eta_defect <= 1e-9
        assert defect.det_defect <= 1e-12
        assert defect.orthochronous


def test_invariants_for_pure_generators():
    a2, b2 = invariants(np.array([0.5, 0.0, 0.0]), np.zeros(3))
    assert (a2, b2) == (0.0, pytest.approx(0.25))
    a2, b2 = invariants(np.zeros(3), np.array([0.0, 0.3, 0.0]))
    assert (a2, b2) == (pytest.approx(0.09), 0.0)
    a2, b2 = invariants(np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    assert a2 == 0.0 and b2 == 0.0


@pytest.mark.parametrize(
    "m",
    [
        2.0 * np.eye(4),
        np.diag([1.0, 1.0, 1.0, -1.0]),
        np.diag([-1.0, -1.0, 1.0, 1.0]),
        np.eye(3),
    ],
)
def test_lorentz_matrix_rejects_non_members(m):
    with pytest.raises(InvalidInputError):
        LorentzMatrix(m)


def test_lorentz_matrix_rejection_reason():
    with pytest.raises(NotALorentzMatrixError):
        LorentzMatrix(np.diag([-1.0, -1.0, 1.0, 1.0]))


def test_inverse_and_compose(rng):
    lam = exp_lorentz(_random_element(rng))
    assert np.allclose(lam.compose(lam.inverse()).m, np.eye(4), atol=1e-12)
    assert np.allclose(lam.inverse().m, np.linalg.inv(lam.m), atol=1e-12)


def test_minkowski_inner_is_preserved(rng):
    lam = exp_lorentz(_random_element(rng))
    u = FourVector(1.3, 0.2, -0.5, 0.7)
    v = FourVector(2.0, 1.0, 0.0, -1.0)
    assert minkowski_inner(apply(lam, u), apply(lam, v)) == pytest.approx(minkowski_inner(u, v), abs=1e-12)


def test_projection_of_algebra_element_is_identity(rng):
    e = _random_element(rng)
    p = project_to_algebra(algebra_to_matrix(e))
    assert np.allclose(p.as_vector(), e.as_vector(), atol=1e-15)
    assert np.allclose(project_to_algebra(np.diag([1.0, 2.0, 3.0, 4.0])).as_vector(), 0.0)


def test_projection_is_nearest_algebra_element(rng):
    l0 = rng.normal(size=(4, 4))
    best = np.linalg.norm(algebra_to_matrix(project_to_algebra(l0)) - l0)
    p = project_to_algebra(l0).as_vector()
    for _ in range(200):
        nearby = LorentzAlgebraElement.from_vector(p + 0.1 * rng.normal(size=6))
        assert np.linalg.norm(algebra_to_matrix(nearby) - l0) >= best


def test_lie_distance():
    lam = boost((0.3, 0.1, 0.0))
    assert lie_distance(lam, lam.m) == pytest.approx(0.0, abs=1e-24)
    e = LorentzAlgebraElement((0.1, 0.0, 0.0), (0.0, 0.0, 0.2))
    expected = np.linalg.norm(algebra_to_matrix(e)) ** 2
    assert lie_distance(LorentzMatrix.identity(), exp_lorentz(e).m) == pytest.approx(expected, rel=1e-10)


def test_four_vector_validation():
    with pytest.raises(InvalidInputError):
        FourVector(np.nan, 0.0, 0.0, 0.0)
    with pytest.raises(InvalidInputError):
        FourVector.from_array([1.0, 2.0, 3.0])
    assert FourVector.from_array([1, 2, 3, 4]).as_array().tolist() == [1.0, 2.0, 3.0, 4.0]


def test_lorentz_defect_examples():
    assert lorentz_defect(np.eye(4)) == (0.0, 0.0, True)
    defect = lorentz_defect(ETA)
    assert defect.eta_defect == 0.0
    assert defect.det_defect == pytest.approx(2.0)
    assert not defect.orthochronous


def test_minkowski_inner_examples():
    rest = FourVector(1.0, 0.0, 0.0, 0.0)
    assert minkowski_inner(rest, rest) == -1.0
    light = FourVector(1.0, 1.0, 0.0, 0.0)
    assert minkowski_inner(light, light) == 0.0
    moving = FourVector(math.sqrt(2.0), 1.0, 0.0, 0.0)
    assert minkowski_inner(moving, moving) == pytest.approx(-1.0, abs=1e-15)


def test_products_of_exponentials_stay_in_the_group(rng):
    for _ in range(100):
        product = exp_lorentz(_random_element(rng)).m @ exp_lorentz(_random_element(rng)).m
        defect = lorentz_defect(product)
        assert defect.eta_defect <= 1e-9
        assert defect.det_defect <= 1e-9
        assert defect.orthochronous


def test_projection_is_linear_and_idempotent(rng):
    for _ in range(20):
        l1, l2 = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
        s, t = rng.normal(size=2)
        combined = project_to_algebra(s * l1 + t * l2).as_vector()
        separate = s * project_to_algebra(l1).as_vector() + t * project_to_algebra(l2).as_vector()
        assert np.allclose(combined, separate, atol=1e-14)
        once = project_to_algebra(l1)
        assert np.array_equal(project_to_algebra(algebra_to_matrix(once)).as_vector(), once.as_vector())


def test_log_projection_roundtrip(rng):
    for _ in range(200):
        e = _random_element(rng)
        # principal branch: |zeta|, |theta| <= 1
        zeta = e.zeta / max(1.0, np.linalg.norm(e.zeta))
        theta = e.theta / max(1.0, np.linalg.norm(e.theta))
        e = LorentzAlgebraElement(zeta, theta)
        projected = project_to_algebra(mat_log_real(exp_lorentz(e).m))
        back = matrix_to_algebra(algebra_to_matrix(projected))
        assert np.allclose(back.as_vector(), e.as_vector(), atol=1e-9)


def test_matrix_to_algebra_tolerance():
    m = algebra_to_matrix(LorentzAlgebraElement((0.1, 0.0, 0.0), (0.0, 0.2, 0.0)))
    with pytest.raises(NotAnAlgebraElementError):
        matrix_to_algebra(m + 1e-3 * np.eye(4), tol=1e-6)
    assert np.allclose(matrix_to_algebra(m + 1e-12 * np.eye(4), tol=1e-6).as_vector(), [0.1, 0, 0, 0, 0.2, 0])
