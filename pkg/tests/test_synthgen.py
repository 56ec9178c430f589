import numpy as np
import pytest

from scalealloc import synthgen
from scalealloc.curves import ModelSpec
from scalealloc.synthgen import BESIROGLU, HOFFMANN, NoiseConfig, NoiseKind

# closed form evaluated with 40-digit mpmath before the build
HOFFMANN_1E9_1E10 = 2.0847958797178000


def test_asymptotes_equal_irreducible_loss():
    assert synthgen.loss_surface(HOFFMANN, np.inf, np.inf) == 1.6934
    assert synthgen.loss_surface(BESIROGLU, np.inf, np.inf) == 1.8172


def test_hoffmann_point_value():
    assert synthgen.loss_surface(HOFFMANN, 1e9, 1e10) == pytest.approx(HOFFMANN_1E9_1E10, rel=1e-14)


@pytest.mark.parametrize("n, d", [(0, 1), (1, 0), (-1, 5)])
def test_loss_surface_rejects_nonpositive(n, d):
    with pytest.raises(ValueError):
        synthgen.loss_surface(HOFFMANN, n, d)


def test_loss_surface_above_floor(rng):
    n = 10 ** rng.uniform(1, 13, 200)
    d = 10 ** rng.uniform(0, 14, 200)
    assert np.all(synthgen.loss_surface(HOFFMANN, n, d) > HOFFMANN.e)


def test_generate_curve_uses_6nd():
    c = synthgen.generate_curve(HOFFMANN, ModelSpec("m", 10**9), [6e19])
    assert c.loss[0] == synthgen.loss_surface(HOFFMANN, 1e9, 1e10)


def test_generate_curve_noiseless_is_closed_form_and_decreasing():
    grid = synthgen.log_grid(1e15, 1e20)
    c = synthgen.generate_curve(HOFFMANN, ModelSpec("m", 10**7), grid)
    np.testing.assert_array_equal(c.loss, synthgen.loss_surface(HOFFMANN, 1e7, grid / 6e7))
    assert np.all(np.diff(c.loss) < 0)


def test_generate_curve_skips_sub_token_points():
    m = ModelSpec("m", 10**6)
    c = synthgen.generate_curve(HOFFMANN, m, [1e5, 6e6, 1e7])
    assert c.compute.tolist() == [6e6, 1e7]
    with pytest.raises(ValueError, match="grid below one token"):
        synthgen.generate_curve(HOFFMANN, m, [1.0, 2.0])


def test_generate_curve_is_reproducible():
    grid = synthgen.log_grid(1e12, 1e16)
    noise = NoiseConfig("ou", 0.01, 0.5)
    a = synthgen.generate_curve(HOFFMANN, ModelSpec("m", 1000), grid, noise, seed=3)
    b = synthgen.generate_curve(HOFFMANN, ModelSpec("m", 1000), grid, noise, seed=3)
    np.testing.assert_array_equal(a.loss, b.loss)


@pytest.mark.parametrize("kind", list(NoiseKind))
def test_zero_weight_gives_zero_noise(kind):
    grid = synthgen.log_grid(1, 1e6, 50)
    eps = synthgen.sample_noise(NoiseConfig(kind, 0.1, 0.0), grid, -np.ones(50), seed=1)
    assert np.all(eps == 0)


def test_ou_without_diffusion_stays_at_mean():
    grid = synthgen.log_grid(1, 1e6, 50)
    eps = synthgen.sample_noise(NoiseConfig("ou", 0.0, 0.7, ou_mu=0.3), grid, -np.ones(50), seed=1)
    np.testing.assert_allclose(eps, 0.21)


def test_noise_stops_at_inclination_point():
    grid = synthgen.log_grid(1, 1e6, 50)
    grads = np.where(np.arange(50) < 30, -0.5, -1e-4)
    eps = synthgen.sample_noise(NoiseConfig("awgn", 0.01), grid, grads, seed=1)
    assert np.all(eps[30:] == 0) and np.all(eps[:30] != 0)


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig("awgn", -1.0)
    with pytest.raises(ValueError):
        NoiseConfig("awgn", 1.0, 1.5)
    with pytest.raises(ValueError):
        NoiseConfig("bogus")


def test_awgn_statistics_on_generated_curve():
    grid = synthgen.log_grid(1e6, 1e7, 100_000)
    noise = NoiseConfig("awgn", 1e-4)
    m = ModelSpec("m", 1)
    clean = synthgen.generate_curve(HOFFMANN, m, grid)
    noisy = synthgen.generate_curve(HOFFMANN, m, grid, noise, seed=5)
    resid = np.log(noisy.loss) - np.log(clean.loss)
    assert abs(resid.std() / 1e-2 - 1) < 0.05


def test_sample_model_sizes(rng):
    sizes = synthgen.sample_model_sizes(rng, 20)
    assert len(set(sizes)) == 20
    assert all(4 <= s <= 2**42 and s & (s - 1) == 0 for s in sizes)
    with pytest.raises(ValueError):
        synthgen.sample_model_sizes(rng, 50)


def test_preset_lookup():
    assert synthgen.preset("Hoffmann") is HOFFMANN
    with pytest.raises(ValueError):
        synthgen.preset("nope")
