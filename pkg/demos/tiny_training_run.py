"""
Overfitting synthetic tones with a narrow network
=================================================

Four tone classes, eight clips each, a width-reduced model and plain SGD
with momentum. Training stops once every clip is classified correctly.
"""

import numpy as np

from audio_inceptionnext.dsp import SpectrogramConfig
from audio_inceptionnext.model import ModelConfig, build_model
from audio_inceptionnext.profiler import count_params
from audio_inceptionnext.train import TrainSchedule, evaluate, fit, format_epoch, make_synthetic_dataset

spec = SpectrogramConfig.finetune()
train = make_synthetic_dataset(4, 8, seed=0)
held = make_synthetic_dataset(4, 4, seed=1)
print(len(train), "training clips,", len(held), "held-out clips")

model = build_model(ModelConfig(num_classes=4, stage_channels=(16, 32, 64, 128)), np.random.default_rng(0))
print("parameters:", count_params(model))

schedule = TrainSchedule(epochs=30, base_lr=0.01, decay_epochs=(), batch_size=8, phase="finetune")
history, _ = fit(model, train, schedule, None, spec, seed=0, stop_at_top1=100.0, patience=3)
print("epoch\tlr\tloss\ttop1")
for stats in history:
    print(format_epoch(stats))

report = evaluate(model, held, spec)
print("\n".join(report.to_lines()[:6]))
