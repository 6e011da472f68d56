"""
From waveform to model input
============================

A two-tone signal goes through the log-mel front end, gets fitted to a fixed
number of frames and is then masked by SpecAugment.
"""

import numpy as np

from audio_inceptionnext.augment import AugmentPolicy, augment
from audio_inceptionnext.dsp import SpectrogramConfig, log_mel, spectrogram_for_model

sr = 16000
t = np.arange(int(2.6 * sr)) / sr
signal = 0.4 * np.sin(2 * np.pi * 440 * t) + 0.2 * np.sin(2 * np.pi * 1900 * t)

# The fine-tune preset: 5 ms hop, 416 frames per 2.08 s clip.
cfg = SpectrogramConfig.finetune(sr)
resolved = cfg.resolved()
print("window", resolved.win_length, "hop", resolved.hop_length, "n_fft", resolved.n_fft)

full = log_mel(signal, cfg)
print("whole recording:", full.shape)

# Centred crop (or edge padding) to the preset's frame count.
clip = spectrogram_for_model(signal, cfg)
print("model input:", clip.shape)

# The louder 440 Hz tone owns the strongest mel band.
print("loudest mel bin:", int(clip.values.mean(axis=0).argmax()))

# Masks and warp, scaled so a time mask never exceeds T/8.
policy = AugmentPolicy().scaled_to(*clip.shape)
events = []
masked = augment(clip, policy, np.random.default_rng(0), events)
fill = np.float32(clip.values.mean())
print("masked frames:", int((masked.values == fill).all(axis=1).sum()), "masked bins:", int((masked.values == fill).all(axis=0).sum()))

# Same seed, same output.
again = augment(clip, policy, np.random.default_rng(0))
print("replay identical:", again.values.tobytes() == masked.values.tobytes())

# Other sample rates still give 416 x 128.
for rate in (22050, 44100):
    x = np.random.default_rng(rate).standard_normal(int(2.08 * rate))
    print(rate, "Hz ->", log_mel(x, SpectrogramConfig.finetune(rate)).shape)
