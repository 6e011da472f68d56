"""PCM waveform to log-mel spectrogram."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, fields, replace
from typing import Dict, Optional

import numpy as np


@dataclass(frozen=True)
class SpectrogramConfig:
    """STFT and mel settings.

    ``n_fft=None`` picks the smallest power of two that covers the window and
    leaves no mel filter without an FFT bin. ``fmax=None`` means Nyquist.
    """

    sample_rate: int = 16000
    window_ms: float = 10.0
    hop_ms: float = 5.0
    n_mels: int = 128
    n_fft: Optional[int] = None
    fmin: float = 0.0
    fmax: Optional[float] = None
    clip_seconds: float = 2.08
    log_floor: float = 1e-10

    @classmethod
    def pretrain(cls, sample_rate: int = 16000) -> "SpectrogramConfig":
        return cls(sample_rate=sample_rate, window_ms=20.0, hop_ms=10.0, clip_seconds=5.12)

    @classmethod
    def finetune(cls, sample_rate: int = 16000) -> "SpectrogramConfig":
        return cls(sample_rate=sample_rate, window_ms=10.0, hop_ms=5.0, clip_seconds=2.08)

    @property
    def win_length(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def f_max(self) -> float:
        return self.sample_rate / 2.0 if self.fmax is None else float(self.fmax)

    @property
    def target_frames(self) -> int:
        return int(round(self.clip_seconds * 1000.0 / self.hop_ms))

    @property
    def clip_samples(self) -> int:
        return int(round(self.clip_seconds * self.sample_rate))

    def resolved(self) -> "SpectrogramConfig":
        """Copy with ``n_fft`` filled in."""
        if self.n_fft is not None:
            self.validate()
            return self
        return _resolve(self)

    def _search_n_fft(self) -> "SpectrogramConfig":
        self.validate()
        n_fft = 1 << max(0, math.ceil(math.log2(max(self.win_length, 1))))
        while n_fft < (1 << 20):
            try:
                _filterbank(replace(self, n_fft=n_fft))
                return replace(self, n_fft=n_fft)
            except ValueError:
                n_fft *= 2
        raise ValueError(f"no FFT size up to 2**20 supports {self.n_mels} mel filters")

    def validate(self) -> None:
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.win_length < 1 or self.hop_length < 1:
            raise ValueError(f"window/hop of {self.window_ms}/{self.hop_ms} ms is below one sample")
        if self.n_mels < 1:
            raise ValueError(f"n_mels must be >= 1, got {self.n_mels}")
        if self.n_fft is not None and self.n_fft < self.win_length:
            raise ValueError(f"n_fft {self.n_fft} shorter than window of {self.win_length} samples")
        if not 0 <= self.fmin < self.f_max <= self.sample_rate / 2.0:
            raise ValueError(f"need 0 <= fmin < fmax <= sr/2, got fmin={self.fmin}, fmax={self.f_max}")
        if self.log_floor <= 0:
            raise ValueError(f"log_floor must be positive, got {self.log_floor}")
        if self.clip_seconds <= 0:
            raise ValueError(f"clip_seconds must be positive, got {self.clip_seconds}")

    def to_dict(self) -> Dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class Spectrogram:
    values: np.ndarray  # (T, F), float32
    config: SpectrogramConfig

    @property
    def shape(self):
        return self.values.shape


# Slaney mel scale: linear below 1 kHz, logarithmic above.
_F_SP = 200.0 / 3
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = math.log(6.4) / 27.0


def hz_to_mel(hz):
    hz = np.asarray(hz, dtype=np.float64)
    linear = hz / _F_SP
    log = _MIN_LOG_MEL + np.log(np.maximum(hz, _MIN_LOG_HZ) / _MIN_LOG_HZ) / _LOGSTEP
    return np.where(hz >= _MIN_LOG_HZ, log, linear)


def mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    linear = mel * _F_SP
    log = _MIN_LOG_HZ * np.exp(_LOGSTEP * (np.maximum(mel, _MIN_LOG_MEL) - _MIN_LOG_MEL))
    return np.where(mel >= _MIN_LOG_MEL, log, linear)


@functools.lru_cache(maxsize=64)
def _resolve(config: SpectrogramConfig) -> SpectrogramConfig:
    return config._search_n_fft()


def mel_filterbank(config: SpectrogramConfig) -> np.ndarray:
    """Slaney-normalized triangular filters, shape ``(n_mels, n_fft // 2 + 1)``."""
    return _filterbank(config.resolved()).copy()


@functools.lru_cache(maxsize=64)
def _filterbank(config: SpectrogramConfig) -> np.ndarray:
    n_fft, sr = config.n_fft, config.sample_rate
    bins = np.fft.rfftfreq(n_fft, 1.0 / sr)
    edges = mel_to_hz(np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.f_max), config.n_mels + 2))
    widths = np.diff(edges)
    ramps = edges[:, None] - bins[None, :]
    lower = -ramps[:-2] / widths[:-1, None]
    upper = ramps[2:] / widths[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]
    empty = np.flatnonzero(weights.max(axis=1) <= 0)
    if empty.size:
        raise ValueError(
            f"mel filter {int(empty[0])} has no FFT bin support (n_mels={config.n_mels}, n_fft={n_fft}, sr={sr})"
        )
    return weights.astype(np.float32)


def _hann(win_length: int, n_fft: int) -> np.ndarray:
    # periodic Hann, zero-padded to n_fft and centered
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win_length) / win_length)
    left = (n_fft - win_length) // 2
    out = np.zeros(n_fft)
    out[left : left + win_length] = window
    return out


def stft_power(signal: np.ndarray, config: SpectrogramConfig) -> np.ndarray:
    """|FFT|^2 of Hann-windowed frames, shape ``(T, n_fft // 2 + 1)``.

    Frame ``t`` is centered at sample ``round(t * hop)`` with ``hop`` the exact
    (possibly fractional) hop in samples, using reflect padding, and
    ``T = max(1, floor(len(signal) / hop))``.
    """
    signal = np.asarray(signal, dtype=np.float64).reshape(-1)
    if signal.size == 0:
        raise ValueError("cannot compute an STFT of an empty signal")
    cfg = config.resolved()
    n_fft = cfg.n_fft
    hop = cfg.sample_rate * cfg.hop_ms / 1000.0
    half = n_fft // 2
    mode = "reflect" if signal.size > 1 else "edge"
    padded = np.pad(signal, (half, half), mode=mode)
    n_frames = max(1, int(math.floor(signal.size / hop + 1e-9)))
    starts = np.minimum(np.round(np.arange(n_frames) * hop).astype(np.int64), signal.size - 1)
    frames = np.lib.stride_tricks.sliding_window_view(padded, n_fft)[starts]
    spectrum = np.fft.rfft(frames * _hann(cfg.win_length, n_fft), axis=1)
    return (spectrum.real**2 + spectrum.imag**2).astype(np.float64)


def log_mel(signal: np.ndarray, config: SpectrogramConfig) -> Spectrogram:
    """Natural-log mel energies ``log(max(mel @ power, log_floor))``, shape ``(T, n_mels)``."""
    cfg = config.resolved()
    power = stft_power(signal, cfg)
    mel = power @ _filterbank(cfg).T.astype(np.float64)
    values = np.log(np.maximum(mel, cfg.log_floor)).astype(np.float32)
    return Spectrogram(values, cfg)


def fit_to_frames(spec: Spectrogram, target_frames: int, rng: Optional[np.random.Generator] = None) -> Spectrogram:
    """Edge-pad (repeat the last frame) or crop along time to ``target_frames``.

    Crops are random when ``rng`` is given and centered otherwise.
    """
    if target_frames < 1:
        raise ValueError(f"target_frames must be >= 1, got {target_frames}")
    values = spec.values
    t = values.shape[0]
    if t < target_frames:
        values = np.pad(values, ((0, target_frames - t), (0, 0)), mode="edge")
    elif t > target_frames:
        excess = t - target_frames
        start = int(rng.integers(0, excess + 1)) if rng is not None else excess // 2
        values = values[start : start + target_frames]
    return Spectrogram(np.ascontiguousarray(values), spec.config)


def random_clip(signal: np.ndarray, clip_seconds: float, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly placed window of ``clip_seconds``; shorter recordings come back whole."""
    if clip_seconds <= 0:
        raise ValueError(f"clip_seconds must be positive, got {clip_seconds}")
    signal = np.asarray(signal)
    length = int(round(clip_seconds * sample_rate))
    if signal.shape[0] <= length:
        return signal
    start = int(rng.integers(0, signal.shape[0] - length + 1))
    return signal[start : start + length]


def center_clip(signal: np.ndarray, clip_seconds: float, sample_rate: int) -> np.ndarray:
    length = int(round(clip_seconds * sample_rate))
    signal = np.asarray(signal)
    if signal.shape[0] <= length:
        return signal
    start = (signal.shape[0] - length) // 2
    return signal[start : start + length]


def resample_linear(signal: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    if src_rate == dst_rate:
        return np.asarray(signal)
    n_out = max(1, int(round(len(signal) * dst_rate / src_rate)))
    t_out = np.arange(n_out) * (src_rate / dst_rate)
    return np.interp(t_out, np.arange(len(signal)), signal).astype(np.float32)


def spectrogram_for_model(
    signal: np.ndarray, config: SpectrogramConfig, rng: Optional[np.random.Generator] = None
) -> Spectrogram:
    """Clip, transform and fit a waveform to the model's ``(T, F)`` input.

    A random clip and crop when ``rng`` is given, centered otherwise.
    """
    cfg = config.resolved()
    if rng is not None:
        clip = random_clip(signal, cfg.clip_seconds, cfg.sample_rate, rng)
    else:
        clip = center_clip(signal, cfg.clip_seconds, cfg.sample_rate)
    return fit_to_frames(log_mel(clip, cfg), cfg.target_frames, rng)
