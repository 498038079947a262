import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from rsrae.gaussian import Gaussian, best_rank_d_gaussian, gaussian_w2, project_gaussian, psd_sqrt
from rsrae.linear import Subspace, principal_angle, random_subspace
from rsrae.tensor import ShapeError

seeds = st.integers(0, 2**32 - 1)


def random_gaussian(rng, D=3, scale=1.0):
    B = rng.standard_normal((D, D))
    return Gaussian(scale * rng.standard_normal(D), B @ B.T + 0.1 * np.eye(D))


# -- construction -------------------------------------------------------------------

def test_rejects_asymmetric_and_indefinite():
    with pytest.raises(ValueError):
        Gaussian(np.zeros(2), [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        Gaussian(np.zeros(2), [[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ShapeError):
        Gaussian(np.zeros(2), np.eye(3))


def test_psd_sqrt_squares_back(rng):
    g = random_gaussian(rng, 4)
    R = psd_sqrt(g.cov)
    np.testing.assert_allclose(R @ R, g.cov, atol=1e-12)


def test_psd_sqrt_indefinite():
    with pytest.raises(np.linalg.LinAlgError):
        psd_sqrt(np.diag([1.0, -1.0]))


# -- W2 -----------------------------------------------------------------------------

def test_self_distance_zero(rng):
    g = random_gaussian(rng)
    assert gaussian_w2(g, g) == pytest.approx(0.0, abs=1e-7)


def test_point_masses():
    a, b = Gaussian([0.0, 0.0], np.zeros((2, 2))), Gaussian([3.0, 4.0], np.zeros((2, 2)))
    assert gaussian_w2(a, b) == pytest.approx(5.0, abs=1e-12)


def test_commuting_covariances_closed_form():
    # diagonal case: W2^2 = |dm|^2 + sum (sqrt(a) - sqrt(b))^2
    a, b = Gaussian([0.0, 0.0], np.diag([4.0, 1.0])), Gaussian([1.0, 0.0], np.diag([1.0, 9.0]))
    assert gaussian_w2(a, b) == pytest.approx(np.sqrt(1 + 1 + 4), rel=1e-12)


def test_matches_discrete_transport():
    rng = np.random.default_rng(3)
    a = Gaussian([0.0, 0.0], [[2.0, 0.6], [0.6, 1.0]])
    b = Gaussian([2.0, -1.0], [[0.5, -0.2], [-0.2, 1.5]])
    n = 2000
    xa = rng.multivariate_normal(a.mean, a.cov, n)
    xb = rng.multivariate_normal(b.mean, b.cov, n)
    C = cdist(xa, xb, "sqeuclidean")
    r, c = linear_sum_assignment(C)
    empirical = np.sqrt(C[r, c].mean())
    assert abs(empirical - gaussian_w2(a, b)) <= 0.05 * gaussian_w2(a, b)


def test_dimension_mismatch():
    with pytest.raises(ShapeError):
        gaussian_w2(Gaussian([0.0], [[1.0]]), Gaussian([0.0, 0.0], np.eye(2)))


@given(seeds)
def test_metric_properties(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_gaussian(rng) for _ in range(3))
    ab, ba = gaussian_w2(a, b), gaussian_w2(b, a)
    assert ab == pytest.approx(ba, abs=1e-12 * max(1.0, ab) * 1e3)
    assert ab >= 0
    assert ab <= gaussian_w2(a, c) + gaussian_w2(c, b) + 1e-9


@given(seeds)
def test_rotation_equivariance(seed):
    rng = np.random.default_rng(seed)
    a, b = random_gaussian(rng), random_gaussian(rng)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    rot = lambda g: Gaussian(Q @ g.mean, Q @ g.cov @ Q.T)  # noqa: E731
    assert gaussian_w2(rot(a), rot(b)) == pytest.approx(gaussian_w2(a, b), abs=1e-10)


# -- projection ---------------------------------------------------------------------

def test_project_onto_full_space(rng):
    g = random_gaussian(rng)
    p = project_gaussian(g, Subspace(np.eye(3)))
    np.testing.assert_allclose(p.mean, g.mean, atol=1e-15)
    np.testing.assert_allclose(p.cov, g.cov, atol=1e-15)


def test_project_isotropic_onto_x_axis():
    p = project_gaussian(Gaussian([1.0, 2.0], np.eye(2)), Subspace(np.array([[1.0], [0.0]])))
    np.testing.assert_array_equal(p.mean, [1.0, 0.0])
    np.testing.assert_array_equal(p.cov, np.diag([1.0, 0.0]))


@given(seeds, st.integers(1, 3))
def test_projected_rank_at_most_d(seed, d):
    rng = np.random.default_rng(seed)
    g = random_gaussian(rng, 4)
    w = np.linalg.eigvalsh(project_gaussian(g, random_subspace(4, d, rng)).cov)
    assert np.sum(w > 1e-9 * w.max()) <= d


def test_project_dimension_mismatch(rng):
    with pytest.raises(ShapeError):
        project_gaussian(random_gaussian(rng, 3), random_subspace(4, 1, rng))


# -- best rank-d --------------------------------------------------------------------

def test_best_rank_one_diag():
    S, g = best_rank_d_gaussian(Gaussian([0.0, 0.0], np.diag([4.0, 1.0])), 1)
    assert principal_angle(S, Subspace(np.array([[1.0], [0.0]]))) < 1e-12
    np.testing.assert_allclose(g.cov, np.diag([4.0, 0.0]), atol=1e-14)


def test_isotropic_any_subspace_is_optimal(rng):
    g = Gaussian(rng.standard_normal(3), 2.0 * np.eye(3))
    _, best = best_rank_d_gaussian(g, 2)
    ref = gaussian_w2(g, best)
    for _ in range(50):
        S = random_subspace(3, 2, rng)
        # keep the mean, as the optimum does
        p = project_gaussian(g, S)
        assert gaussian_w2(g, Gaussian(g.mean, p.cov)) == pytest.approx(ref, abs=1e-9)


@settings(max_examples=20)
@given(seeds, st.sampled_from([1, 2]))
def test_best_rank_d_beats_random_projections(seed, d):
    rng = np.random.default_rng(seed)
    g = random_gaussian(rng)
    _, best = best_rank_d_gaussian(g, d)
    assert np.array_equal(best.mean, g.mean)
    w = gaussian_w2(g, best)
    for _ in range(200):
        assert w <= gaussian_w2(g, project_gaussian(g, random_subspace(3, d, rng))) + 1e-9


def test_best_rank_d_errors():
    with pytest.raises(ValueError):
        best_rank_d_gaussian(Gaussian([0.0, 0.0], np.diag([1.0, 0.0])), 1)
    with pytest.raises(ValueError):
        best_rank_d_gaussian(Gaussian([0.0, 0.0], np.eye(2)), 3)
