import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from optoback.signal import apply_input_mask, apply_output_mask, mask_error, readout_window, time_invert
from optoback.types import DimensionError, InputError, MaskSet, ReservoirConfig, SequencePair

from oracles import input_mask_loop, mask_error_loop, output_mask_loop


def masks_from(m, mb, u=None, ub=None):
    m = np.atleast_2d(m)
    n_t = m.shape[1]
    u = np.zeros((1, n_t)) if u is None else np.atleast_2d(u)
    ub = np.zeros(u.shape[0]) if ub is None else np.atleast_1d(ub)
    return MaskSet(m, mb, u, ub)


class TestInputMask:
    def test_zero_input_leaves_bias(self, rng):
        masks = masks_from(rng.normal(size=(1, 6)), rng.normal(size=6))
        z = apply_input_mask(SequencePair([[0.0]], targets=[[0.0]]), masks)
        np.testing.assert_array_equal(z, masks.bias_mask)

    def test_hand_example(self):
        masks = masks_from([[1.0, 2.0]], [0.5, 0.5])
        seq = SequencePair([[1.0], [-1.0]], targets=[[0.0], [0.0]])
        np.testing.assert_allclose(apply_input_mask(seq, masks), [1.5, 2.5, -0.5, -1.5])

    def test_matches_loop_oracle(self, rng):
        m, mb = rng.normal(size=(3, 5)), rng.normal(size=5)
        s = rng.normal(size=(4, 3))
        z = apply_input_mask(SequencePair(s, targets=np.zeros((4, 1))), masks_from(m, mb))
        np.testing.assert_allclose(z, input_mask_loop(s, m, mb), rtol=1e-14, atol=1e-14)

    def test_channel_mismatch(self, rng):
        masks = masks_from(rng.normal(size=(2, 4)), np.zeros(4))
        with pytest.raises(DimensionError):
            apply_input_mask(SequencePair(np.zeros((3, 1)), targets=np.zeros((3, 1))), masks)

    @given(
        arrays(np.float64, (5, 2), elements=st.floats(-10, 10)),
        arrays(np.float64, (5, 2), elements=st.floats(-10, 10)),
        st.floats(-3, 3),
        st.floats(-3, 3),
    )
    def test_linear_in_input(self, s1, s2, alpha, beta):
        rng = np.random.default_rng(1)
        m, mb = rng.normal(size=(2, 3)), rng.normal(size=3)
        with_bias, no_bias = masks_from(m, mb), masks_from(m, np.zeros(3))

        def z(s, masks):
            return apply_input_mask(SequencePair(s, targets=np.zeros((5, 1))), masks)

        lhs = z(alpha * s1 + beta * s2, with_bias)
        rhs = alpha * z(s1, no_bias) + beta * z(s2, no_bias) + np.tile(mb, 5)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


class TestOutputMask:
    def test_zero_state_reads_bias(self, rng):
        masks = masks_from(np.zeros((1, 4)), np.zeros(4), rng.normal(size=(3, 4)), rng.normal(size=3))
        y = apply_output_mask(np.zeros(12), masks)
        np.testing.assert_array_equal(y, np.tile(masks.output_bias, (3, 1)))

    def test_hand_example(self):
        masks = masks_from(np.zeros((1, 2)), np.zeros(2), [[1.0, -1.0]], [0.0])
        assert apply_output_mask(np.array([3.0, 5.0]), masks)[0, 0] == -2.0

    def test_matches_loop_oracle(self, rng):
        u, ub = rng.normal(size=(2, 7)), rng.normal(size=2)
        a = rng.normal(size=28)
        masks = masks_from(np.zeros((1, 7)), np.zeros(7), u, ub)
        np.testing.assert_allclose(apply_output_mask(a, masks), output_mask_loop(a, u, ub), rtol=1e-13, atol=1e-14)

    def test_zero_output_masks_give_bias_rows(self, rng):
        masks = masks_from(np.zeros((1, 3)), np.zeros(3), np.zeros((2, 3)), [0.3, -0.1])
        y = apply_output_mask(rng.normal(size=15), masks)
        np.testing.assert_array_equal(y, np.tile([0.3, -0.1], (5, 1)))

    @pytest.mark.parametrize("length", [0, 2, 7])
    def test_rejects_partial_periods(self, length):
        masks = masks_from(np.zeros((1, 3)), np.zeros(3))
        with pytest.raises(DimensionError):
            apply_output_mask(np.zeros(length), masks)


class TestMaskError:
    def test_zero_error(self, rng):
        masks = masks_from(np.zeros((1, 4)), np.zeros(4), rng.normal(size=(2, 4)))
        assert not np.any(mask_error(np.zeros((3, 2)), masks))

    def test_hand_example(self):
        masks = masks_from(np.zeros((1, 2)), np.zeros(2), [[2.0, 3.0]])
        np.testing.assert_array_equal(mask_error(np.array([[1.0], [-1.0]]), masks), [2, 3, -2, -3])

    def test_matches_loop_oracle(self, rng):
        u = rng.normal(size=(3, 6))
        dy = rng.normal(size=(5, 3))
        masks = masks_from(np.zeros((1, 6)), np.zeros(6), u)
        np.testing.assert_allclose(mask_error(dy, masks), mask_error_loop(dy, u), rtol=1e-13, atol=1e-14)

    def test_single_output_is_scaled_mask(self, rng):
        u = rng.normal(size=(1, 4))
        dy = rng.normal(size=(3, 1))
        e = mask_error(dy, masks_from(np.zeros((1, 4)), np.zeros(4), u))
        np.testing.assert_allclose(e, (dy * u).ravel())


class TestTimeInvert:
    def test_examples(self):
        np.testing.assert_array_equal(time_invert(np.array([1.0, 2.0, 3.0])), [3, 2, 1])
        assert time_invert(np.array([])).size == 0

    @given(arrays(np.float64, st.integers(0, 50), elements=st.floats(allow_nan=False)))
    def test_involution(self, x):
        np.testing.assert_array_equal(time_invert(time_invert(x)), x)

    def test_returns_copy(self):
        x = np.arange(3.0)
        y = time_invert(x)
        y[0] = 99
        assert x[2] == 2.0


def test_readout_window_strips_history():
    cfg = ReservoirConfig(3)
    a = np.arange(10.0)
    np.testing.assert_array_equal(readout_window(a, cfg.n_delay), np.arange(4.0, 10.0))


def test_index_mapping_has_no_off_by_one():
    # drive step n belongs to sequence index n // N_T
    n_t, L = 4, 6
    s = np.arange(1.0, L + 1)[:, None]
    z = apply_input_mask(SequencePair(s, targets=np.zeros((L, 1))), masks_from(np.ones((1, n_t)), np.zeros(n_t)))
    assert z.size == L * n_t
    np.testing.assert_array_equal(z, np.arange(L * n_t) // n_t + 1)


class TestContainers:
    def test_maskset_validation(self):
        with pytest.raises(DimensionError):
            MaskSet(np.zeros((1, 3)), np.zeros(4), np.zeros((1, 3)), np.zeros(1))
        with pytest.raises(DimensionError):
            MaskSet(np.zeros((1, 3)), np.zeros(3), np.zeros((2, 3)), np.zeros(1))
        with pytest.raises(InputError):
            MaskSet(np.full((1, 3), np.nan), np.zeros(3), np.zeros((1, 3)), np.zeros(1))

    def test_flat_round_trip(self, rng):
        masks = MaskSet(rng.normal(size=(2, 3)), rng.normal(size=3), rng.normal(size=(4, 3)), rng.normal(size=4))
        again = masks.with_flat(masks.flat())
        for a, b in zip(masks, again):
            np.testing.assert_array_equal(a, b)

    def test_reservoir_config_delay(self):
        cfg = ReservoirConfig(80)
        assert cfg.n_delay == 81
        with pytest.raises(ValueError):
            ReservoirConfig(80, delay_steps=80)
        with pytest.raises(ValueError):
            ReservoirConfig(0)

    def test_sequence_pair_requires_one_kind(self):
        with pytest.raises(ValueError):
            SequencePair(np.zeros((2, 1)))
        with pytest.raises(ValueError):
            SequencePair(np.zeros((2, 1)), targets=np.zeros((2, 1)), labels=[0, 1])
        with pytest.raises(DimensionError):
            SequencePair(np.zeros((0, 1)), targets=np.zeros((0, 1)))
        seq = SequencePair(np.zeros((3, 2)), labels=[0, 2, 1], n_classes=4)
        assert seq.kind.value == "classification" and seq.n_outputs == 4
