import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cmahpo.kde import KdeError, kde_diffusion, linear_bin, silverman_bandwidth

NORMAL_PEAK = 3.989422804014327  # 1 / (0.1 * sqrt(2 pi))


def reflected_gaussian_kde(samples, grid, h, lo=0.0, hi=1.0):
    """Brute-force Gaussian kernel estimate with mirror images at both walls."""
    w = hi - lo
    out = np.zeros_like(grid)
    for chunk in np.array_split(samples, max(1, len(samples) // 5000)):
        for k in (-1, 0, 1):
            for src in (chunk, 2 * lo - chunk):
                d = grid[:, None] - (src[None, :] + 2 * k * w)
                out += np.exp(-0.5 * (d / h) ** 2).sum(axis=1)
    return out / (len(samples) * h * math.sqrt(2 * math.pi))


def normal_samples(seed, n=100_000):
    return np.random.default_rng(seed).normal(0.5, 0.1, n)


@pytest.fixture(scope="module")
def estimate():
    return kde_diffusion(normal_samples(0), 256, 0.0, 1.0)


class TestNormal:
    def test_peak(self, estimate):
        i = np.searchsorted(estimate.mesh, 0.5)
        peak = np.interp(0.5, estimate.mesh[i - 1:i + 1], estimate.density[i - 1:i + 1])
        assert abs(peak - NORMAL_PEAK) / NORMAL_PEAK < 0.05

    def test_integral(self, estimate):
        assert abs(estimate.integral() - 1) <= 1e-6

    def test_mesh(self, estimate):
        assert estimate.mesh_points == 256
        assert np.all(np.diff(estimate.mesh) > 0)
        assert estimate.mesh[0] > 0 and estimate.mesh[-1] < 1

    def test_matches_oracle(self, estimate):
        oracle = reflected_gaussian_kde(normal_samples(0), estimate.mesh, estimate.bandwidth)
        assert np.max(np.abs(estimate.density - oracle)) < 1e-3

    def test_bandwidth_close_to_normal_reference(self, estimate):
        h_ref = 1.06 * 0.1 * 100_000 ** -0.2
        assert estimate.bandwidth == pytest.approx(h_ref, rel=0.25)
        assert estimate.flag is None


class TestProperties:
    @given(st.integers(0, 2**32), st.floats(-5, 5), st.sampled_from([-3.0, -0.5, 0.01, 2.0, 40.0]))
    @settings(max_examples=25, deadline=None)
    def test_affine_equivariance(self, seed, a, b):
        s = np.random.default_rng(seed).beta(2, 5, 500)
        base = kde_diffusion(s, 128, 0.0, 1.0)
        lo, hi = sorted((a, a + b))
        moved = kde_diffusion(a + b * s, 128, lo, hi)
        dens = moved.density if b > 0 else moved.density[::-1]
        mesh = moved.mesh if b > 0 else moved.mesh[::-1]
        assert np.allclose(mesh, a + b * base.mesh, rtol=0, atol=1e-8 * max(1, abs(a) + abs(b)))
        assert np.max(np.abs(dens * abs(b) - base.density)) < 1e-8
        assert moved.bandwidth_t == pytest.approx(base.bandwidth_t, rel=1e-8)

    def test_bandwidth_sanity(self):
        ratios = []
        for seed in range(20):
            x = np.random.default_rng(seed).standard_normal(2000)
            est = kde_diffusion(x, 1024)
            h_s = silverman_bandwidth(x)
            ratios.append(est.bandwidth**2 / h_s**2)
        assert all(0.1 <= r <= 10 for r in ratios), ratios

    @given(st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=200), st.sampled_from([64, 100, 256]))
    @settings(max_examples=60, deadline=None)
    def test_normalized_and_non_negative(self, xs, m):
        spread = max(xs) - min(xs)
        assume(spread == 0 or spread > 1e-300)  # narrower spreads are rejected, see below
        est = kde_diffusion(xs, m)
        assert abs(est.integral() - 1) <= 1e-6
        assert np.all(est.density >= 0)

    def test_uniform(self):
        u = np.random.default_rng(0).random(10_000)
        est = kde_diffusion(u, 256, 0.0, 1.0)
        inner = (est.mesh > 0.05) & (est.mesh < 0.95)
        assert np.max(np.abs(est.density[inner] - 1)) < 0.1

    def test_mesh_rounded_up(self):
        est = kde_diffusion(normal_samples(1, 1000), 100, 0.0, 1.0)
        assert est.mesh_points == 128
        assert kde_diffusion(normal_samples(1, 1000), 5000, 0.0, 1.0).mesh_points == 8192
        assert kde_diffusion(normal_samples(1, 1000), 10, 0.0, 1.0).mesh_points == 64

    def test_default_domain_padded(self):
        est = kde_diffusion([1.0, 2.0, 3.0, 4.0, 5.0])
        assert est.lo == pytest.approx(0.6) and est.hi == pytest.approx(5.4)


class TestEdgeCases:
    def test_degenerate(self):
        est = kde_diffusion([0.3] * 20, 256, 0.0, 1.0)
        assert est.flag == "degenerate"
        assert est.bandwidth_t == 1 / 256**2
        assert abs(est.integral() - 1) <= 1e-6
        assert abs(est.mode() - 0.3) < 1 / 256

    def test_too_few(self):
        with pytest.raises(KdeError, match="at least 5"):
            kde_diffusion([0.1, 0.2, 0.3, 0.4])

    def test_empty_domain(self):
        with pytest.raises(KdeError):
            kde_diffusion(np.linspace(0, 1, 10), 64, 1.0, 1.0)

    def test_unrepresentable_domain(self):
        with pytest.raises(KdeError, match="too narrow"):
            kde_diffusion([0.0, 0.0, 0.0, 0.0, 2.2250738585072014e-308], 64)
        with pytest.raises(KdeError, match="too narrow"):
            kde_diffusion([-1e308, 0.0, 1.0, 2.0, 1e308], 64)

    def test_non_finite(self):
        with pytest.raises(KdeError):
            kde_diffusion([0.1, 0.2, np.nan, 0.4, 0.5])

    def test_samples_outside_domain_dropped(self):
        est = kde_diffusion(np.r_[np.linspace(0.2, 0.8, 50), [5.0, -3.0]], 64, 0.0, 1.0)
        assert est.sample_count == 50


class TestLinearBin:
    def test_mass_conserved(self):
        u = np.random.default_rng(0).random(1000)
        assert linear_bin(u, 64).sum() == pytest.approx(1.0, abs=1e-12)

    def test_centre_point(self):
        h = linear_bin(np.array([0.5 / 64]), 64)
        assert h[0] == pytest.approx(1.0) and h[1:].sum() == pytest.approx(0.0)

    def test_split_between_centres(self):
        h = linear_bin(np.array([1.0 / 64]), 64)
        assert h[0] == pytest.approx(0.5) and h[1] == pytest.approx(0.5)
