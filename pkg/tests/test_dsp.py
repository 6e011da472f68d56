import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from audio_inceptionnext.dsp import (
    Spectrogram,
    SpectrogramConfig,
    center_clip,
    fit_to_frames,
    hz_to_mel,
    log_mel,
    mel_filterbank,
    mel_to_hz,
    random_clip,
    resample_linear,
    spectrogram_for_model,
    stft_power,
)


def tone(freq, seconds, sr=16000, amp=0.5):
    t = np.arange(int(round(seconds * sr))) / sr
    return amp * np.sin(2 * np.pi * freq * t)


def test_sine_peak_at_expected_bin():
    cfg = SpectrogramConfig(sample_rate=16000, window_ms=32.0, hop_ms=16.0, n_fft=512)
    k = 40
    power = stft_power(tone(k * 16000 / 512, 1.0), cfg)
    assert np.all(power[2:-2].argmax(axis=1) == k)


def test_zero_signal_zero_power_and_floor():
    cfg = SpectrogramConfig.finetune()
    assert not stft_power(np.zeros(3200), cfg).any()
    spec = log_mel(np.zeros(3200), cfg)
    np.testing.assert_allclose(spec.values, math.log(1e-10), rtol=1e-6)


def test_empty_signal_rejected():
    with pytest.raises(ValueError, match="empty"):
        stft_power(np.zeros(0), SpectrogramConfig.finetune())


@pytest.mark.parametrize("sr", [8000, 16000, 22050, 44100, 48000])
def test_preset_shapes_any_rate(sr):
    pre = SpectrogramConfig.pretrain(sr)
    fine = SpectrogramConfig.finetune(sr)
    assert log_mel(tone(440, 5.12, sr), pre).shape == (512, 128)
    assert log_mel(tone(440, 2.08, sr), fine).shape == (416, 128)


def test_pretrain_stft_frames():
    assert stft_power(tone(300, 5.12), SpectrogramConfig.pretrain()).shape[0] == 512


def test_filterbank_shape_and_rows():
    cfg = SpectrogramConfig(n_fft=1024)
    fb = mel_filterbank(cfg)
    assert fb.shape == (128, 513)
    assert (fb >= 0).all() and (fb.sum(axis=1) > 0).all()
    peaks = fb.argmax(axis=1)
    assert np.all(np.diff(peaks) >= 0)


def test_filterbank_names_empty_filter():
    with pytest.raises(ValueError, match="mel filter \\d+ has no FFT bin support"):
        mel_filterbank(SpectrogramConfig(n_fft=256))


def test_auto_fft_size_gives_full_support():
    for cfg in (SpectrogramConfig.pretrain(), SpectrogramConfig.finetune()):
        r = cfg.resolved()
        assert r.n_fft >= r.win_length and r.n_fft & (r.n_fft - 1) == 0
        assert (mel_filterbank(r).max(axis=1) > 0).all()


def test_mel_roundtrip():
    hz = np.linspace(0, 8000, 100)
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(hz)), hz, atol=1e-3)


def test_mel_scale_anchor_points():
    # Linear below 1 kHz at 200/3 Hz per mel, logarithmic above.
    assert hz_to_mel(1000.0) == pytest.approx(15.0)
    assert hz_to_mel(500.0) == pytest.approx(7.5)
    assert hz_to_mel(6400.0) == pytest.approx(15.0 + 27.0)


def test_scaling_shifts_log_mel_by_2logc():
    cfg = SpectrogramConfig.finetune()
    x = tone(700, 0.5) + 0.1 * np.random.default_rng(0).standard_normal(8000)
    base = log_mel(x, cfg).values.astype(np.float64)
    scaled = log_mel(3.0 * x, cfg).values.astype(np.float64)
    live = base > math.log(1e-10) + 1
    np.testing.assert_allclose((scaled - base)[live], 2 * math.log(3.0), atol=1e-4)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0, allow_nan=False), min_size=1, max_size=400))
def test_log_mel_finite(samples):
    assert np.isfinite(log_mel(np.array(samples), SpectrogramConfig.finetune()).values).all()


def test_config_validation():
    with pytest.raises(ValueError):
        SpectrogramConfig(fmin=9000.0).validate()
    with pytest.raises(ValueError):
        SpectrogramConfig(n_fft=64).validate()
    with pytest.raises(ValueError):
        SpectrogramConfig(n_mels=0).validate()


# fit_to_frames


def _spec(t, f=4):
    return Spectrogram(np.arange(t * f, dtype=np.float32).reshape(t, f), SpectrogramConfig())


def test_fit_identity():
    s = _spec(416)
    np.testing.assert_array_equal(fit_to_frames(s, 416).values, s.values)


def test_fit_edge_pads_last_frame():
    s = _spec(400)
    out = fit_to_frames(s, 416).values
    assert out.shape[0] == 416
    np.testing.assert_array_equal(out[400:], np.repeat(s.values[399:400], 16, axis=0))


def test_fit_centered_crop():
    s = _spec(500)
    np.testing.assert_array_equal(fit_to_frames(s, 416).values, s.values[42:458])


def test_fit_random_crop_seeded():
    s = _spec(500)
    a = fit_to_frames(s, 416, np.random.default_rng(5)).values
    b = fit_to_frames(s, 416, np.random.default_rng(5)).values
    np.testing.assert_array_equal(a, b)
    start = int(a[0, 0]) // 4
    np.testing.assert_array_equal(a, s.values[start : start + 416])


# clipping


def test_random_clip_cases():
    x = np.arange(16000 * 10, dtype=np.float32)
    exact = np.arange(int(5.12 * 16000))
    np.testing.assert_array_equal(random_clip(exact, 5.12, 16000, np.random.default_rng(0)), exact)
    a = random_clip(x, 5.12, 16000, np.random.default_rng(3))
    b = random_clip(x, 5.12, 16000, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)
    assert a.size == 81920 and np.all(np.diff(a) == 1)
    short = np.ones(100)
    np.testing.assert_array_equal(random_clip(short, 5.12, 16000, np.random.default_rng(0)), short)
    with pytest.raises(ValueError):
        random_clip(x, 0.0, 16000, np.random.default_rng(0))


def test_center_clip_and_model_input():
    x = np.arange(100)
    np.testing.assert_array_equal(center_clip(x, 0.005, 10000), x[25:75])
    spec = spectrogram_for_model(tone(500, 1.0), SpectrogramConfig.finetune())
    assert spec.shape == (416, 128)


def test_resample_linear():
    x = np.sin(np.linspace(0, 6, 4800))
    y = resample_linear(x, 48000, 16000)
    assert y.size == 1600
    np.testing.assert_allclose(y[:10], x[:30:3], atol=1e-6)
