import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffrestore.rng import CounterRNG
from diffrestore.targets import (EPS, UniformTarget, WrappedGaussianMixture, estimate_normalization, eval_batch,
                                 eval_point, fd_score, minmod, pixel_index, score_batch, score_point)
from diffrestore.torus import wrap


def analytic_score(target, X):
    """Score of a mixture from its analytic gradient."""
    return target.gradient(X) / (target.density(X)[:, None] + EPS)


def test_uniform_target():
    t = UniformTarget(4)
    ev = t.evaluate(np.full(4, 0.3))
    assert ev.p == 1.0 and np.all(ev.f == 1.0)
    np.testing.assert_array_equal(t.score(np.zeros((3, 4))), 0.0)


@pytest.mark.parametrize("dim", [0, 1, 3])
def test_dimension_must_be_even(dim):
    with pytest.raises(ValueError):
        UniformTarget(dim)


@pytest.mark.parametrize("kwargs", [
    dict(weights=[-1.0], means=[[0.5, 0.5]], stddevs=[0.1]),
    dict(weights=[1.0], means=[[0.5, 0.5]], stddevs=[0.0]),
    dict(weights=[1.0, 1.0], means=[[0.5, 0.5]], stddevs=[0.1]),
    dict(weights=[1.0], means=[[0.5, 0.5]], stddevs=[0.1], clip=-1.0),
])
def test_mixture_validation(kwargs):
    with pytest.raises(ValueError):
        WrappedGaussianMixture(**kwargs)


def test_mixture_normalization(mixture):
    mean, stderr = estimate_normalization(mixture, 3, 200000)
    assert abs(mean - 1.0) < 4 * stderr
    assert mixture.normalization == 1.0


def test_mixture_is_periodic(mixture, rng):
    X = rng.random((100, 2))
    np.testing.assert_allclose(mixture.density(X), mixture.density(X + [1.0, -2.0]), rtol=1e-12)


def test_mixture_gradient_matches_finite_differences(mixture, rng):
    X = rng.random((50, 2))
    h = 1e-6
    fd = np.stack([(mixture.density(X + h * e) - mixture.density(X - h * e)) / (2 * h) for e in np.eye(2)], 1)
    np.testing.assert_allclose(mixture.gradient(X), fd, rtol=1e-5, atol=1e-6)


def test_fd_score_matches_analytic_on_smooth_target(mixture, rng):
    X = rng.random((200, 2))
    s = fd_score(mixture, X)
    # one-sided differences with h = 1e-6: error O(h * |d^2 ln p|)
    np.testing.assert_allclose(s, analytic_score(mixture, X), rtol=1e-3, atol=1e-2)


def test_minmod():
    np.testing.assert_array_equal(minmod([1.0, -2.0, 3.0, 0.0], [2.0, -1.0, -3.0, 5.0]), [1.0, -1.0, 0.0, 0.0])


def test_fd_score_ignores_a_jump():
    """Across a step of p the limited difference keeps the smooth side (here 0)."""

    class Step(UniformTarget):
        def _eval(self, X):
            p = np.where(X[:, 0] < 0.5, 1.0, 2.0)
            return np.repeat(p[:, None], 3, axis=1), p

    s = fd_score(Step(), np.array([0.5 - 1e-7, 0.3]))
    np.testing.assert_array_equal(s, [0.0, 0.0])


def test_clip_zeroes_density_and_score():
    t = WrappedGaussianMixture([1.0], [[0.5, 0.5]], [0.05], clip=1.0)
    x = np.array([[0.0, 0.0], [0.5, 0.5]])
    p = t.density(x)
    assert p[0] == 0.0 and p[1] > 0
    assert np.all(t.score(x[:1]) == 0.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_pixel_index_range(x0, x1):
    idx = pixel_index(np.array([x0, x1]), 32, 16)
    assert 0 <= idx < 32 * 16
    assert idx == int(x1 * 16) * 32 + int(x0 * 32)


def test_numba_point_kernels_match_batch(mixture, rng):
    pk = mixture.pack()
    X = rng.random((64, 2))
    f_b, p_b = eval_batch(pk, X)
    s_b = score_batch(pk, X)
    rgb = np.zeros(3)
    out = np.zeros(2)
    work = np.zeros(2)
    for i, x in enumerate(X):
        p = eval_point(pk, x, rgb)
        np.testing.assert_allclose(p, p_b[i], rtol=1e-13)
        np.testing.assert_allclose(rgb, f_b[i], rtol=1e-13)
        score_point(pk, x, out, work, rgb)
        np.testing.assert_allclose(out, s_b[i], rtol=1e-9, atol=1e-9)


def test_class_methods_match_across_backends(mixture, rng, monkeypatch):
    X = rng.random((500, 2))
    p_nb, s_nb = mixture.density(X), mixture.score(X)
    monkeypatch.setenv("DIFFRESTORE_DISABLE_NUMBA", "1")
    np.testing.assert_allclose(mixture.density(X), p_nb, rtol=1e-14)
    np.testing.assert_allclose(mixture.score(X), s_nb, rtol=1e-12, atol=1e-12)


def test_estimate_normalization_uses_given_stream():
    t = UniformTarget()
    m, se = estimate_normalization(t, CounterRNG.single(0), 1000)
    assert m == 1.0 and se == 0.0


def test_wrap_used_by_scores_stays_on_torus(mixture):
    x = np.array([[1e-9, 1 - 1e-9]])
    s = mixture.score(x)
    assert np.all(np.isfinite(s))
    assert np.all(wrap(x) < 1.0)
