"""Audio classification with a multi-scale separable-kernel CNN on log-mel spectrograms.

Everything runs on numpy: a small reverse-mode tensor engine, the DSP front end,
SpecAugment, the network, a symbolic cost profiler, training and metrics.
"""

from .augment import AugmentPolicy, augment, freq_mask, time_mask, time_warp
from .config import RunConfig, build_run_config
from .dsp import Spectrogram, SpectrogramConfig, fit_to_frames, log_mel, mel_filterbank, random_clip, stft_power
from .gradcheck import grad_check
from .io import load_checkpoint, parse_manifest, read_spectrogram, read_wav, save_checkpoint, write_spectrogram
from .metrics import d_prime, mean_average_precision, mean_per_class_accuracy, roc_auc, topk_accuracy
from .model import AudioInceptionNeXt, ModelConfig, build_model, replace_head, set_bn_policy
from .optim import OptimizerState, sgd_momentum_step
from .profiler import ProfileReport, count_macs, count_params, emit_table, profile
from .tensor import Tensor, backward, no_grad
from .train import EvalReport, TrainSchedule, evaluate, fit, lr_at, make_synthetic_dataset

__version__ = "0.1.0"
