import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperhar import numerics as nx
from hyperhar.errors import ConfigError, ShapeError
from hyperhar.losses import (AllTargetsMissingWarning, LossConfig, bce_loss, class_weights,
                             contrastive_loss, total_loss)
from hyperhar.numerics import Matrix

from conftest import bce_loop, contrastive_loop


def random_batch(seed, N=6, H=5, p_missing=0.2):
    rng = np.random.default_rng(seed)
    probs = rng.uniform(0.01, 0.99, (N, H))
    t = rng.integers(0, 2, (N, H)).astype(np.int8)
    t[rng.random((N, H)) < p_missing] = -1
    return probs, t


class TestBCE:
    def test_ln2(self):
        assert bce_loss(Matrix([[0.5]]), np.array([[1]])).item() == pytest.approx(math.log(2),
                                                                                  abs=1e-15)

    def test_confident_limit(self):
        t = np.array([[1, 0, 1]])
        eps = 1e-9
        v = bce_loss(Matrix([[1 - eps, eps, 1 - eps]]), t).item()
        assert 0 < v < 1e-8

    @pytest.mark.parametrize("seed", range(5))
    def test_loop_oracle(self, seed):
        probs, t = random_batch(seed)
        assert bce_loss(Matrix(probs), t).item() == pytest.approx(bce_loop(probs, t), abs=1e-12)

    def test_inverse_frequency_oracle(self):
        probs, t = random_batch(11, N=20)
        w = class_weights(t)
        cfg = LossConfig(bce_weight_mode="inverse_frequency")
        got = bce_loss(Matrix(probs), t, cfg, w).item()
        assert got == pytest.approx(bce_loop(probs, t, w), abs=1e-12)

    def test_class_weights_values(self):
        t = np.array([[1, -1], [0, 0], [0, 0], [0, 1]], dtype=np.int8)
        wpos, wneg = class_weights(t)
        np.testing.assert_allclose(wpos, [2.0, 1.5])
        np.testing.assert_allclose(wneg, [4 / 6, 0.75])

    def test_inverse_frequency_needs_weights(self):
        with pytest.raises(ConfigError):
            bce_loss(Matrix([[0.5]]), np.array([[1]]), LossConfig(bce_weight_mode="inverse_frequency"))

    def test_mask_equals_removal(self):
        probs, t = random_batch(3, p_missing=0.0)
        masked = t.copy()
        masked[2, 3] = -1
        full = bce_loss(Matrix(probs), t).item()
        removed_term = (math.log(probs[2, 3]) if t[2, 3] == 1 else math.log(1 - probs[2, 3]))
        # same N, one fewer summand
        expected = full + removed_term / probs.shape[0]
        assert bce_loss(Matrix(probs), masked).item() == pytest.approx(expected, abs=1e-12)

    def test_all_missing_warns_and_returns_zero(self):
        with pytest.warns(AllTargetsMissingWarning):
            v = bce_loss(Matrix([[0.3, 0.6]]), np.array([[-1, -1]]))
        assert v.item() == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            bce_loss(Matrix([[0.3, 0.6]]), np.array([[1]]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.permutations(range(6)))
    def test_batch_permutation_invariance(self, seed, perm):
        probs, t = random_batch(seed)
        a = bce_loss(Matrix(probs), t).item()
        b = bce_loss(Matrix(probs[list(perm)]), t[list(perm)]).item()
        assert a == pytest.approx(b, abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.05, 0.9), st.floats(0.01, 0.09))
    def test_monotone_toward_target(self, p, step):
        t = np.array([[1, 0]])
        before = bce_loss(Matrix([[p, 0.4]]), t).item()
        after = bce_loss(Matrix([[min(p + step, 0.999), 0.4]]), t).item()
        assert after < before


class TestContrastive:
    def test_identical_same_type(self):
        emb = Matrix([[1.0, 2.0], [1.0, 2.0]])
        v = contrastive_loss(emb, np.array([0, 0]), LossConfig(0.5, 0.5)).item()
        assert v == pytest.approx(0.0, abs=1e-15)

    def test_orthogonal_cross_type(self):
        emb = Matrix([[1.0, 0.0], [0.0, 3.0]])
        v = contrastive_loss(emb, np.array([0, 1]), LossConfig(0.03, 0.1)).item()
        assert v == pytest.approx(-0.1, abs=1e-15)

    @pytest.mark.parametrize("seed", range(4))
    def test_double_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        emb = rng.standard_normal((10, 4))
        types = rng.integers(0, 3, 10)
        v = contrastive_loss(Matrix(emb), types, LossConfig(0.03, 0.01)).item()
        assert v == pytest.approx(contrastive_loop(emb, types, 0.03, 0.01), abs=1e-12)

    def test_zero_rows_excluded(self):
        rng = np.random.default_rng(4)
        emb = rng.standard_normal((6, 3))
        emb[[1, 4]] = 0.0
        types = np.array([0, 0, 1, 1, 2, 2])
        v = contrastive_loss(Matrix(emb), types, LossConfig(0.2, 0.1)).item()
        assert v == pytest.approx(contrastive_loop(emb, types, 0.2, 0.1), abs=1e-12)

    def test_zero_dim(self):
        with pytest.raises(ShapeError):
            contrastive_loss(Matrix(np.zeros((3, 0))), np.array([0, 1, 2]))

    def test_disabled(self):
        emb = Matrix(np.random.default_rng(0).standard_normal((5, 3)))
        assert contrastive_loss(emb, np.zeros(5, int), LossConfig(0.0, 0.0)).item() == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(0, 7), st.floats(0.01, 100.0))
    def test_row_rescaling_invariance(self, seed, row, scale):
        rng = np.random.default_rng(seed)
        emb = rng.standard_normal((8, 3))
        types = rng.integers(0, 3, 8)
        cfg = LossConfig(0.3, 0.2)
        a = contrastive_loss(Matrix(emb), types, cfg).item()
        emb[row] *= scale
        b = contrastive_loss(Matrix(emb), types, cfg).item()
        assert a == pytest.approx(b, abs=1e-12)

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_swap_negates_on_two_nodes(self, l1, l2):
        emb = Matrix([[1.0, 0.2], [0.3, 1.0]])
        same = contrastive_loss(emb, np.array([0, 0]), LossConfig(l1, l2)).item()
        cross = contrastive_loss(emb, np.array([0, 1]), LossConfig(l2, l1)).item()
        assert same == pytest.approx(-cross, abs=1e-12)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ConfigError):
            LossConfig(-0.1, 0.0)


class TestTotal:
    def test_disabled_contrastive_is_bce(self):
        probs, t = random_batch(1)
        emb = Matrix(np.random.default_rng(2).standard_normal((7, 3)))
        cfg = LossConfig(0.0, 0.0)
        assert (total_loss(Matrix(probs), t, emb, np.zeros(7, int), cfg).item()
                == bce_loss(Matrix(probs), t, cfg).item())

    def test_both_terms_vanish(self):
        t = np.array([[1, 0]])
        emb = Matrix([[1.0, 1.0], [2.0, 2.0], [0.5, 0.5]])
        v = total_loss(Matrix([[1.0, 0.0]]), t, emb, np.zeros(3, int), LossConfig(0.5, 0.5))
        assert v.item() == pytest.approx(0.0, abs=1e-15)

    def test_sum_of_components(self):
        probs, t = random_batch(5)
        rng = np.random.default_rng(6)
        emb, types = rng.standard_normal((9, 4)), rng.integers(0, 3, 9)
        cfg = LossConfig(0.03, 0.01)
        got = total_loss(Matrix(probs), t, Matrix(emb), types, cfg).item()
        assert got == pytest.approx(bce_loop(probs, t) + contrastive_loop(emb, types, 0.03, 0.01),
                                    abs=1e-12)

    def test_gradients(self):
        rng = np.random.default_rng(8)
        logits = Matrix(rng.standard_normal((4, 3)), requires_grad=True)
        emb = Matrix(rng.standard_normal((6, 3)), requires_grad=True)
        t = np.array([[1, 0, -1], [0, 0, 1], [-1, 1, 1], [0, 1, 0]], dtype=np.int8)
        types = np.array([0, 0, 1, 1, 2, 2])
        cfg = LossConfig(0.3, 0.1)

        def fn():
            return total_loss(nx.activation(logits, "sigmoid"), t, emb, types, cfg)

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert nx.gradient_check(fn, [logits, emb]) <= 1e-4
