"""Modulator, embedding and attention-reference tests, including the two
algebraic factorization checks."""

import numpy as np
import pytest

from thsgr import autodiff as ad
from thsgr.autodiff import Tensor, grad_check
from thsgr.errors import ConfigError, UsageError
from thsgr.modulator import (EmbeddingParams, ModulatorParams, MsaParams,
                             modulator_forward, msa_reference,
                             patch_to_embedding, verify_modulator_factorization,
                             verify_msa_factorization)

from .reference import single_head_attention_oracle


def identity_modulator(dim):
    """Left branch forced to all-ones (bias-driven), W3 = W4 = identity."""
    eye_k1 = np.eye(dim)[:, :, None]
    return ModulatorParams(
        w1=Tensor(np.zeros((dim, dim, 1))), b1=Tensor(np.zeros(dim)),
        w2=Tensor(np.zeros((dim, dim, 3))), b2=Tensor(np.ones(dim)),
        w3=Tensor(eye_k1.copy()), b3=Tensor(np.zeros(dim)),
        w4=Tensor(eye_k1.copy()), b4=Tensor(np.zeros(dim)),
    )


class TestEmbedding:
    def test_zero_everything_zero_output(self, rng):
        params = EmbeddingParams(projection=Tensor(np.zeros((3, 4))),
                                 class_embed=Tensor(np.zeros(4)),
                                 pos_embed=Tensor(np.zeros((5, 4))))
        out = patch_to_embedding(Tensor(np.zeros((2, 3, 2, 2))), params)
        assert np.all(out.data == 0.0)

    def test_output_shape(self, rng):
        params = EmbeddingParams.create(rng, in_dim=3, embed_dim=8, n_tokens=9)
        out = patch_to_embedding(Tensor(rng.standard_normal((2, 3, 3, 3))), params)
        assert out.shape == (2, 10, 8)

    def test_token_permutation_equivariance(self, rng):
        # with E_pos = 0 and the class token excluded, permuting tokens
        # permutes outputs identically (pointwise projection)
        params = EmbeddingParams.create(rng, in_dim=3, embed_dim=6, n_tokens=4)
        params.pos_embed.data[:] = 0.0
        x = rng.standard_normal((1, 3, 2, 2))
        perm = rng.permutation(4)
        xp = x.reshape(1, 3, 4)[:, :, perm].reshape(1, 3, 2, 2)
        base = patch_to_embedding(Tensor(x), params).data[0, 1:]
        permed = patch_to_embedding(Tensor(xp), params).data[0, 1:]
        assert np.max(np.abs(permed - base[perm])) < 1e-12

    def test_pos_table_mismatch_rejected(self, rng):
        params = EmbeddingParams.create(rng, in_dim=3, embed_dim=6, n_tokens=4)
        with pytest.raises(ConfigError):
            patch_to_embedding(Tensor(rng.standard_normal((1, 3, 3, 3))), params)


class TestModulatorForward:
    def test_zero_input_zero_biases(self, rng):
        params = ModulatorParams.create(rng, dim=6)
        out = modulator_forward(Tensor(np.zeros((2, 5, 6))), params)
        assert np.allclose(out.data, 0.0, atol=1e-12)

    def test_identity_modulation(self, rng):
        params = identity_modulator(4)
        x = rng.standard_normal((2, 7, 4))
        out = modulator_forward(Tensor(x), params)
        assert np.max(np.abs(out.data - x)) < 1e-12

    def test_shape_preserved(self, rng):
        params = ModulatorParams.create(rng, dim=8)
        for length in (3, 10, 17):
            out = modulator_forward(Tensor(rng.standard_normal((1, length, 8))),
                                    params)
            assert out.shape == (1, length, 8)

    def test_default_inner_width(self, rng):
        assert ModulatorParams.create(rng, dim=8).inner == 4
        assert ModulatorParams.create(rng, dim=1).inner == 1

    def test_gradient(self, rng):
        params = ModulatorParams.create(rng, dim=4)

        def f(t):
            return ad.tsum(ad.sigmoid(modulator_forward(t, params)))

        assert grad_check(f, Tensor(rng.standard_normal((1, 5, 4))),
                          tol=1e-4).passed


class TestMsaReference:
    def test_single_token(self, rng):
        params = MsaParams.create(rng, dim=6, heads=1)
        x = rng.standard_normal((1, 6))
        out = msa_reference(Tensor(x), params)
        # softmax over one logit is 1, so the output is the projected value row
        assert np.max(np.abs(out.data - x @ params.wv.data)) < 1e-12

    def test_row_permutation_equivariance(self, rng):
        params = MsaParams.create(rng, dim=8, heads=2)
        x = rng.standard_normal((5, 8))
        perm = rng.permutation(5)
        base = msa_reference(Tensor(x), params).data
        permed = msa_reference(Tensor(x[perm]), params).data
        assert np.max(np.abs(permed - base[perm])) < 1e-12

    def test_single_head_vs_oracle(self, rng):
        params = MsaParams.create(rng, dim=8, heads=1)
        x = rng.standard_normal((4, 8))
        out = msa_reference(Tensor(x), params).data
        want = single_head_attention_oracle(x, params.wq.data, params.wk.data,
                                            params.wv.data)
        assert np.max(np.abs(out - want)) < 1e-12

    def test_batched_matches_loop(self, rng):
        params = MsaParams.create(rng, dim=4, heads=2)
        xs = rng.standard_normal((3, 5, 4))
        batched = msa_reference(Tensor(xs), params).data
        for i in range(3):
            single = msa_reference(Tensor(xs[i]), params).data
            assert np.max(np.abs(batched[i] - single)) < 1e-12

    def test_head_mismatch_rejected(self, rng):
        with pytest.raises(ConfigError):
            MsaParams.create(rng, dim=6, heads=4)

    def test_gradient(self, rng):
        params = MsaParams.create(rng, dim=4, heads=2)

        def f(t):
            return ad.tsum(ad.sigmoid(msa_reference(t, params)))

        assert grad_check(f, Tensor(rng.standard_normal((3, 4))), tol=1e-4).passed


class TestMsaFactorization:
    def test_random_instances(self, rng):
        for _ in range(10):
            d = int(rng.integers(1, 9)) * 2
            n = int(rng.integers(1, 17))
            heads = int(rng.choice([1, 2]))
            params = MsaParams.create(rng, dim=d, heads=heads)
            x = Tensor(rng.standard_normal((n, d)))
            assert verify_msa_factorization(x, params).passed

    def test_zero_input(self, rng):
        params = MsaParams.create(rng, dim=4, heads=1)
        report = verify_msa_factorization(Tensor(np.zeros((3, 4))), params)
        assert report.max_abs_diff == 0.0

    def test_rejects_batched_input(self, rng):
        params = MsaParams.create(rng, dim=4, heads=1)
        with pytest.raises(UsageError):
            verify_msa_factorization(Tensor(np.zeros((2, 3, 4))), params)


class TestModulatorFactorization:
    def _square_params(self, rng, dim, w4):
        return ModulatorParams(
            w1=Tensor(rng.standard_normal((dim, dim, 1))),
            b1=Tensor(np.zeros(dim)),
            w2=Tensor(rng.standard_normal((dim, dim, 3))),
            b2=Tensor(np.zeros(dim)),
            w3=Tensor(rng.standard_normal((dim, dim, 1))),
            b3=Tensor(np.zeros(dim)),
            w4=Tensor(w4),
            b4=Tensor(np.zeros(dim)),
        )

    def test_scalar_channel_exact(self, rng):
        params = self._square_params(rng, 1, rng.standard_normal((1, 1, 1)))
        x = Tensor(rng.standard_normal((6, 1)))
        report = verify_modulator_factorization(x, params)
        assert report.exact and report.w4_diagonal

    def test_diagonal_stem_exact(self, rng):
        dim = 3
        w4 = np.zeros((dim, dim, 1))
        w4[np.arange(dim), np.arange(dim), 0] = rng.standard_normal(dim)
        params = self._square_params(rng, dim, w4)
        x = Tensor(rng.standard_normal((5, dim)))
        report = verify_modulator_factorization(x, params)
        assert report.w4_diagonal
        assert report.exact, report.max_abs_diff

    def test_dense_residual_reported(self, rng):
        dim = 2
        params = self._square_params(rng, dim,
                                     rng.standard_normal((dim, dim, 1)))
        x = Tensor(rng.standard_normal((5, dim)))
        report = verify_modulator_factorization(x, params)
        assert not report.w4_diagonal
        assert report.max_abs_diff > 1e-9  # generically nonzero
        assert "identity not exact in dense case" in report.note

    def test_rectangular_params_rejected(self, rng):
        params = ModulatorParams.create(rng, dim=4)  # inner 2 != dim 4
        with pytest.raises(UsageError):
            verify_modulator_factorization(Tensor(np.zeros((3, 4))), params)
