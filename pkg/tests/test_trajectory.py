import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tubekit.seeding import split
from tubekit.errors import GenerationFailedError, InvalidConfigError
from tubekit.trajectory import (
    MotionConfig,
    gaussian_smooth,
    generate,
    interpolate_keyframes,
    linear_trajectory,
    mean_sq_second_difference,
    nonlinear_trajectory,
    resample,
    sample_keyframes,
    static_trajectory,
)


def kernel_oracle(sigma):
    """exp(-k^2 / 2 sigma^2) for |k| <= 3 sigma, normalized (independent of the library)."""
    r = math.ceil(3 * sigma)
    w = [math.exp(-(k * k) / (2 * sigma * sigma)) for k in range(-r, r + 1)]
    s = sum(w)
    return [v / s for v in w]


class TestKeyframes:
    def test_two_keyframes_are_the_endpoints(self):
        for seed in range(5):
            assert sample_keyframes(16, 2, seed).tolist() == [0, 15]

    def test_three_keyframes_has_interior_frame(self):
        k = sample_keyframes(16, 3, 7)
        assert k[0] == 0 and k[2] == 15 and 1 <= k[1] <= 14

    def test_all_frames(self):
        assert sample_keyframes(16, 16, 3).tolist() == list(range(16))

    @pytest.mark.parametrize("K", [1, 17])
    def test_bad_k(self, K):
        with pytest.raises(InvalidConfigError):
            sample_keyframes(16, K, 0)

    @given(T=st.integers(2, 40), data=st.data(), seed=st.integers(0, 2**63))
    def test_structure(self, T, data, seed):
        K = data.draw(st.integers(2, T))
        k = sample_keyframes(T, K, seed)
        assert len(k) == K
        assert k[0] == 0 and k[-1] == T - 1
        assert np.all(np.diff(k) > 0)

    def test_deterministic(self):
        assert np.array_equal(sample_keyframes(30, 6, 11), sample_keyframes(30, 6, 11))


class TestStatic:
    def test_constant(self):
        tr = static_trajectory(MotionConfig("static", 16, 112, 112), 3)
        assert tr.length == 16
        assert np.all(tr.centers == tr.centers[0])
        assert tr.in_bounds(112, 112)

    def test_seeds_differ(self):
        cfg = MotionConfig("static", 16, 112, 112)
        a, b = static_trajectory(cfg, 1), static_trajectory(cfg, 2)
        assert not np.array_equal(a.centers, b.centers)

    def test_single_frame(self):
        assert static_trajectory(MotionConfig("static", 1, 32, 32), 0).length == 1

    def test_wrong_kind(self):
        with pytest.raises(InvalidConfigError):
            static_trajectory(MotionConfig("nonlinear", 16, 32, 32), 0)


class TestLinear:
    def test_interpolation_arithmetic(self):
        c = interpolate_keyframes(np.array([0, 15]), np.array([[10.0, 20.0], [40.0, 80.0]]), 16)
        # 1-based frame 6 is index 5: t = 5/15
        assert c[5] == pytest.approx([20.0, 40.0], abs=1e-12)
        assert c[0].tolist() == [10.0, 20.0] and c[15].tolist() == [40.0, 80.0]

    def test_displacement_band_100_seeds(self):
        cfg = MotionConfig("linear", 16, 112, 112, K=3, delta_min=40, delta_max=80)
        for seed in range(100):
            tr = linear_trajectory(cfg, seed)
            keys = sample_keyframes(16, 3, split(seed, "keyframes"))
            d = np.linalg.norm(np.diff(tr.centers[keys], axis=0), axis=1)
            assert np.all((d >= 40) & (d <= 80)), (seed, d)
            assert tr.in_bounds(112, 112)

    def test_between_keyframes_on_segment(self):
        cfg = MotionConfig("linear", 16, 112, 112, K=4)
        tr = linear_trajectory(cfg, 5)
        keys = sample_keyframes(16, 4, split(5, "keyframes"))
        for k0, k1 in zip(keys[:-1], keys[1:]):
            for i in range(k0, k1 + 1):
                t = (i - k0) / (k1 - k0)
                expect = tr.centers[k0] + t * (tr.centers[k1] - tr.centers[k0])
                assert np.allclose(tr.centers[i], expect, atol=1e-9)

    def test_impossible_band_fails(self):
        cfg = MotionConfig("linear", 16, 10, 10, K=3, delta_min=50, delta_max=60)
        with pytest.raises(GenerationFailedError) as exc:
            linear_trajectory(cfg, 0)
        assert exc.value.attempts == 1000

    def test_bad_delta(self):
        with pytest.raises(InvalidConfigError):
            MotionConfig("linear", 16, 32, 32, delta_min=5, delta_max=2)


class TestGaussianSmooth:
    def test_constant_preserved(self):
        out = gaussian_smooth(np.full(40, 3.7), 2.5)
        assert np.max(np.abs(out - 3.7)) < 1e-12

    @pytest.mark.parametrize("sigma", [0.7, 2.0, 8.0])
    def test_impulse_gives_kernel(self, sigma):
        w = kernel_oracle(sigma)
        n = 10 * len(w)
        x = np.zeros(n)
        x[n // 2] = 1.0
        out = gaussian_smooth(x, sigma)
        r = len(w) // 2
        assert np.allclose(out[n // 2 - r:n // 2 + r + 1], w, atol=1e-15)
        assert out[n // 2] == pytest.approx(w[r], abs=1e-15)

    def test_ramp_interior_unchanged(self):
        x = np.arange(100, dtype=float) * 0.3 + 2
        out = gaussian_smooth(x, 4.0)
        r = math.ceil(12)
        assert np.allclose(out[r:-r], x[r:-r], atol=1e-9)

    def test_length_preserved(self):
        assert len(gaussian_smooth(np.arange(5.0), 8.0)) == 5


class TestResample:
    def test_identity(self):
        x = np.random.default_rng(0).random(12)
        assert np.allclose(resample(x, 12), x, atol=1e-12)

    def test_endpoints(self):
        assert resample([3.0, 9.0, -1.0, 4.0], 2).tolist() == [3.0, 4.0]

    def test_worked_example(self):
        # positions 0, 1.5, 3 on the interpolant of [0, 10, 20, 30]
        assert np.allclose(resample([0, 10, 20, 30], 3), [0, 15, 30])


class TestNonlinear:
    def test_smoothing_reduces_roughness_100_seeds(self):
        cfg = MotionConfig("nonlinear", 16, 112, 112, n=48, sigma=8)
        for seed in range(100):
            tr, raw = nonlinear_trajectory(cfg, seed, return_raw=True)
            assert mean_sq_second_difference(tr.centers) < mean_sq_second_difference(raw)

    def test_large_sigma_collapses_to_mean(self):
        cfg = MotionConfig("nonlinear", 16, 112, 112, n=48, sigma=480)
        tr, raw = nonlinear_trajectory(cfg, 4, return_raw=True)
        assert np.max(np.abs(tr.centers - raw.mean(axis=0))) < 1.0

    def test_length_and_bounds(self):
        cfg = MotionConfig("nonlinear", 16, 32, 24)
        for seed in range(20):
            tr = nonlinear_trajectory(cfg, seed)
            assert tr.length == 16 and tr.in_bounds(32, 24)

    def test_n_must_exceed_t(self):
        with pytest.raises(InvalidConfigError):
            MotionConfig("nonlinear", 16, 32, 32, n=16)


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from(["static", "linear", "nonlinear"]),
       T=st.integers(2, 24), seed=st.integers(0, 2**64 - 1))
def test_length_bounds_determinism(kind, T, seed):
    cfg = MotionConfig(kind, T, 112, 112, K=min(3, T), n=max(48, T + 1))
    a, b = generate(cfg, seed), generate(cfg, seed)
    assert a.length == T
    assert a.in_bounds(112, 112)
    assert np.array_equal(a.centers, b.centers)
