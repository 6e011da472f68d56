import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from audio_inceptionnext.augment import AugmentPolicy, augment, freq_mask, time_mask, time_warp, warp_time_axis
from audio_inceptionnext.dsp import Spectrogram, SpectrogramConfig

from oracles import piecewise_warp


def spec(t=40, f=16, seed=0):
    vals = np.random.default_rng(seed).standard_normal((t, f)).astype(np.float32) + 3.0
    return Spectrogram(vals, SpectrogramConfig())


def masked_cols(before, after):
    return np.flatnonzero((before != after).any(axis=0))


@pytest.mark.parametrize("which", ["freq", "time"])
def test_zero_count_and_zero_width_are_identity(which):
    s = spec(t=64, f=32)
    fn = freq_mask if which == "freq" else time_mask
    for policy in (AugmentPolicy(freq_masks=0, time_masks=0, mask_value=0.0), AugmentPolicy(freq_mask_max=0, time_mask_max=0, mask_value=0.0)):
        np.testing.assert_array_equal(fn(s, policy, np.random.default_rng(1)).values, s.values)


def test_freq_mask_replay():
    s = spec(t=20, f=128)
    policy = AugmentPolicy(freq_mask_max=27, freq_masks=1, mask_value=-1.0)
    out = freq_mask(s, policy, np.random.default_rng(11)).values
    rng = np.random.default_rng(11)
    width = int(rng.integers(0, 28))
    start = int(rng.integers(0, 128 - width + 1))
    inside = np.zeros(128, bool)
    inside[start : start + width] = True
    assert (out[:, inside] == -1.0).all()
    np.testing.assert_array_equal(out[:, ~inside], s.values[:, ~inside])


def test_time_mask_replay():
    s = spec(t=128, f=10)
    policy = AugmentPolicy(time_mask_max=25, time_masks=1, mask_value=-1.0)
    out = time_mask(s, policy, np.random.default_rng(4)).values
    rng = np.random.default_rng(4)
    width = int(rng.integers(0, 26))
    start = int(rng.integers(0, 128 - width + 1))
    inside = np.zeros(128, bool)
    inside[start : start + width] = True
    assert (out[inside] == -1.0).all()
    np.testing.assert_array_equal(out[~inside], s.values[~inside])


def test_warp_zero_shift_identity():
    s = spec()
    np.testing.assert_allclose(warp_time_axis(s.values, 12, 0), s.values, atol=1e-6)


def test_warp_constant_spectrogram_unchanged():
    s = Spectrogram(np.full((30, 8), 2.5, np.float32), SpectrogramConfig())
    for seed in range(10):
        np.testing.assert_array_equal(time_warp(s, AugmentPolicy(time_warp_w=5), np.random.default_rng(seed)).values, s.values)


def test_warp_hand_case_against_oracle():
    vals = np.random.default_rng(0).standard_normal((10, 3)).astype(np.float32)
    out = warp_time_axis(vals, 5, 2)
    np.testing.assert_allclose(out[7], vals[5], atol=1e-6)
    np.testing.assert_array_equal(out[0], vals[0])
    np.testing.assert_array_equal(out[9], vals[9])
    np.testing.assert_allclose(out, piecewise_warp(vals.astype(np.float64), 5, 2), atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(12, 60), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_warp_matches_oracle(t, w, seed):
    vals = np.random.default_rng(seed).standard_normal((t, 4))
    rng = np.random.default_rng(seed)
    anchor = int(rng.integers(w, t - w))
    shift = int(rng.integers(-w, w + 1))
    np.testing.assert_allclose(warp_time_axis(vals, anchor, shift), piecewise_warp(vals, anchor, shift), atol=1e-6)


def test_warp_skipped_when_too_short():
    s = spec(t=10)
    events = []
    out = time_warp(s, AugmentPolicy(time_warp_w=5), np.random.default_rng(0), events)
    assert out is s and events == ["time_warp_skipped"]


def test_disabled_policy_identity():
    s = spec()
    assert augment(s, AugmentPolicy.disabled(), np.random.default_rng(0)) is s


def test_all_max_policy_masks_toy_fully():
    s = Spectrogram(np.arange(1, 17, dtype=np.float32).reshape(4, 4), SpectrogramConfig())
    policy = AugmentPolicy(freq_mask_max=4, freq_masks=30, time_mask_max=4, time_masks=30, time_warp_w=0, mask_value=0.0)
    for seed in range(20):
        assert not augment(s, policy, np.random.default_rng(seed)).values.any()


def test_seeded_pipeline_bit_exact():
    s = spec(t=416, f=128)
    p = AugmentPolicy().scaled_to(416, 128)
    a = augment(s, p, np.random.default_rng(99)).values
    b = augment(s, p, np.random.default_rng(99)).values
    assert a.tobytes() == b.tobytes()


def test_default_fill_is_spectrogram_mean():
    s = spec(t=64, f=32)
    p = AugmentPolicy(freq_masks=1, freq_mask_max=32, time_masks=0, time_warp_w=0)
    rng = np.random.default_rng(0)
    out = augment(s, p, rng).values
    cols = masked_cols(s.values, out)
    if cols.size:
        np.testing.assert_allclose(out[:, cols], np.float32(s.values.mean()))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 3), st.integers(0, 3))
def test_shape_preserved_and_mask_fraction_bounded(seed, fm, tm):
    s = spec(t=48, f=20, seed=seed % 7)
    p = AugmentPolicy(freq_mask_max=6, freq_masks=fm, time_mask_max=5, time_masks=tm, time_warp_w=0, mask_value=-100.0)
    out = augment(s, p, np.random.default_rng(seed)).values
    assert out.shape == s.values.shape
    changed = out != s.values
    bound = (fm * 6 * 48 + tm * 5 * 20) / (48 * 20)
    assert changed.mean() <= bound + 1e-12
    np.testing.assert_array_equal(out[~changed], s.values[~changed])


def test_scaled_to_caps_time_masks():
    p = AugmentPolicy().scaled_to(64, 16)
    assert p.time_mask_max == 8 and p.freq_mask_max == 16
    with pytest.raises(ValueError):
        AugmentPolicy(freq_mask_max=200).validate(416, 128)
