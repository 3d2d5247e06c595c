"""Hetero-encoder tests: shape traces, zero propagation, determinism, and
gradient checks for both modality stems."""

import numpy as np
import pytest

from thsgr import autodiff as ad
from thsgr.autodiff import Tensor, grad_check
from thsgr.encoder import HsiBranchParams, SarBranchParams, hsi_branch, sar_branch
from thsgr.errors import ConfigError


def toy_hsi_params(rng, c_p=8):
    return HsiBranchParams.create(rng, c_p, spectral_kernels=(3, 3, 3),
                                  channels=(2, 3, 4), out_channels=6)


class TestHsiBranch:
    def test_default_shape_trace(self, rng):
        # paper-scale widths: 3-D chain 8/16/32 channels, spectral 7/5/3,
        # fold to 32*(C_p-12) channels, then 3x3 conv to 64
        params = HsiBranchParams.create(rng, c_p=32)
        x = Tensor(rng.standard_normal((2, 1, 32, 15, 15)) * 0.1)
        out = hsi_branch(x, params)
        assert out.shape == (2, 64, 15, 15)
        assert params.conv2d_w.shape[1] == 32 * (32 - 12)

    def test_spatial_extent_preserved(self, rng):
        params = toy_hsi_params(rng)
        for k in (5, 7):
            out = hsi_branch(Tensor(rng.standard_normal((1, 1, 8, k, k))), params)
            assert out.shape == (1, 6, k, k)

    def test_zero_input_zero_output(self, rng):
        params = toy_hsi_params(rng)
        out = hsi_branch(Tensor(np.zeros((2, 1, 8, 5, 5))), params)
        assert np.allclose(out.data, 0.0, atol=1e-12)

    def test_too_few_bands_rejected(self, rng):
        with pytest.raises(ConfigError):
            HsiBranchParams.create(rng, c_p=12)  # 7/5/3 needs >= 13 bands
        with pytest.raises(ConfigError):
            HsiBranchParams.create(rng, c_p=6, spectral_kernels=(3, 3, 3),
                                   channels=(2, 2, 2))

    def test_deterministic(self, rng):
        params = toy_hsi_params(rng)
        x = Tensor(rng.standard_normal((2, 1, 8, 5, 5)))
        a = hsi_branch(x, params).data
        b = hsi_branch(x, params).data
        assert np.array_equal(a, b)
        ad.active_tape().clear()

    def test_gradient_vs_finite_differences(self, rng):
        params = toy_hsi_params(rng)
        x0 = rng.standard_normal((1, 1, 8, 5, 5))

        def f(t):
            return ad.tsum(ad.sigmoid(hsi_branch(t, params)))

        report = grad_check(f, Tensor(x0), tol=1e-4, max_entries=40, rng=rng)
        assert report.passed, report


class TestSarBranch:
    def test_single_channel_passthrough_shape(self, rng):
        params = SarBranchParams.create(rng, hidden=3, out_channels=5)
        out = sar_branch(Tensor(rng.standard_normal((2, 1, 7, 7))), params)
        assert out.shape == (2, 5, 7, 7)

    def test_multichannel_mean_matches_premeaned(self, rng):
        params = SarBranchParams.create(rng, hidden=3, out_channels=5)
        x = rng.standard_normal((2, 4, 7, 7))
        out_multi = sar_branch(Tensor(x), params).data
        out_mean = sar_branch(Tensor(x.mean(axis=1, keepdims=True)), params).data
        assert np.max(np.abs(out_multi - out_mean)) < 1e-12

    def test_zero_input_zero_output(self, rng):
        params = SarBranchParams.create(rng, hidden=3, out_channels=5)
        out = sar_branch(Tensor(np.zeros((2, 2, 5, 5))), params)
        assert np.allclose(out.data, 0.0, atol=1e-12)

    def test_gradient_vs_finite_differences(self, rng):
        params = SarBranchParams.create(rng, hidden=2, out_channels=4)
        x0 = rng.standard_normal((1, 2, 5, 5))

        def f(t):
            return ad.tsum(ad.sigmoid(sar_branch(t, params)))

        report = grad_check(f, Tensor(x0), tol=1e-4, max_entries=40, rng=rng)
        assert report.passed, report

    def test_parameters_enumeration(self, rng):
        params = SarBranchParams.create(rng)
        names = [name for name, _ in params.parameters()]
        assert len(names) == len(set(names)) == 8
