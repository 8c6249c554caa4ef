import numpy as np
import pytest

from sidlab.dists import CategoricalDist, mix, sample_categorical
from sidlab.metrics import tv_distance
from sidlab.rng import RngStream
from sidlab.schedule import Schedule, cosine_alpha


def test_cosine_alpha_endpoints():
    assert cosine_alpha(1.0) == pytest.approx(1.0, abs=1e-12)
    assert cosine_alpha(0.0) == pytest.approx(0.0, abs=1e-12)
    assert cosine_alpha(0.5) == pytest.approx(0.5, abs=1e-12)


def test_cosine_alpha_domain():
    with pytest.raises(ValueError):
        cosine_alpha(-0.01)
    with pytest.raises(ValueError):
        cosine_alpha(1.01)


@pytest.mark.parametrize("kind", ["cosine", "linear-alpha"])
def test_schedule_monotone_and_endpoints(kind):
    sched = Schedule.make(kind)
    grid = np.linspace(0.0, 1.0, 1001)
    alphas = np.array([sched.alpha(t) for t in grid])
    assert abs(alphas[0]) < 1e-12 and abs(alphas[-1] - 1.0) < 1e-12
    assert np.all(np.diff(alphas) >= -1e-15)
    assert all(sched.alpha_dot(t) >= 0.0 for t in grid)


@pytest.mark.parametrize("kind", ["cosine", "linear-alpha"])
def test_alpha_dot_matches_central_differences(kind):
    sched = Schedule.make(kind)
    h = 1e-5
    for t in np.linspace(0.0, 1.0, 1001)[1:-1]:
        fd = (sched.alpha(t + h) - sched.alpha(t - h)) / (2 * h)
        an = sched.alpha_dot(t)
        assert abs(fd - an) <= 1e-6 * max(abs(an), 1e-3)


def test_mix_endpoints_and_arithmetic():
    data = CategoricalDist.delta(0, 2)
    noise = CategoricalDist(np.array([0.5, 0.5]))
    assert np.allclose(mix(data, noise, 1.0).probs, data.probs)
    assert np.allclose(mix(data, noise, 0.0).probs, noise.probs)
    assert np.allclose(mix(data, noise, 0.25).probs, [0.625, 0.375])


def test_mix_dimension_mismatch():
    with pytest.raises(ValueError):
        mix(CategoricalDist.uniform(2), CategoricalDist.uniform(3), 0.5)


def test_mix_valid_on_schedule_grid():
    sched = Schedule.make("cosine")
    d = CategoricalDist(np.array([0.2, 0.3, 0.5]))
    n = CategoricalDist(np.array([0.6, 0.1, 0.3]))
    for t in np.linspace(0, 1, 101):
        m = mix(d, n, sched.alpha(t))
        assert abs(m.probs.sum() - 1.0) < 1e-12
        assert np.all(m.probs >= 0)


def test_categorical_validation():
    with pytest.raises(ValueError):
        CategoricalDist(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        CategoricalDist(np.array([-0.1, 1.1]))
    with pytest.raises(ValueError):
        CategoricalDist(np.array([]))


def test_sample_categorical_delta():
    rng = RngStream(3)
    d = CategoricalDist.delta(2, 4)
    assert all(sample_categorical(d, rng) == 2 for _ in range(50))


def test_sample_categorical_frequency():
    d = CategoricalDist(np.array([0.5, 0.5]))
    rng = RngStream(4)
    draws = [sample_categorical(d, rng) for _ in range(100_000)]
    freq0 = draws.count(0) / len(draws)
    assert abs(freq0 - 0.5) < 0.01


def test_sample_histogram_tv():
    d = CategoricalDist(np.array([0.1, 0.2, 0.3, 0.4]))
    rng = RngStream(5)
    u = rng.uniforms(100_000)
    cdf = np.cumsum(d.probs)
    draws = np.searchsorted(cdf, u, side="right")
    hist = np.bincount(draws, minlength=4)
    assert tv_distance(hist, d.probs) < 0.01


def test_rng_determinism():
    a = RngStream(123, 45)
    b = RngStream(123, 45)
    assert np.array_equal(a.uniforms(1000), b.uniforms(1000))
    # a specific frozen value guards cross-platform drift
    assert RngStream(0, 0).uniform() == pytest.approx(0.8492380605126982, abs=0.0)


def test_rng_child_streams_disjoint():
    root = RngStream(9)
    u1 = root.child(1).uniforms(100)
    u2 = root.child(2).uniforms(100)
    assert not np.array_equal(u1, u2)
    # child derivation does not consume from the parent
    before = RngStream(9).uniform()
    root2 = RngStream(9)
    root2.child(77)
    assert root2.uniform() == before


def test_rng_uniform_scalar_matches_vector():
    a = RngStream(42, 7)
    b = RngStream(42, 7)
    scalars = np.array([a.uniform() for _ in range(32)])
    assert np.array_equal(scalars, b.uniforms(32))
