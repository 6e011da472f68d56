"""Two-phase training recipe, evaluation, and a synthetic desk-scale dataset."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import ops
from .augment import AugmentPolicy, augment
from .dsp import SpectrogramConfig, hz_to_mel, mel_to_hz, resample_linear, spectrogram_for_model
from .metrics import d_prime, mean_average_precision, mean_per_class_accuracy, roc_auc, topk_accuracy
from .model import AudioInceptionNeXt
from .optim import OptimizerState, sgd_momentum_step, zero_grad
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


@dataclass
class TrainSchedule:
    epochs: int = 50
    base_lr: float = 0.01
    momentum: float = 0.9
    decay_factor: float = 0.1
    decay_epochs: Tuple[int, ...] = (30, 40)
    batch_size: int = 32
    phase: str = "pretrain"

    @classmethod
    def pretrain(cls, epochs: int = 50, batch_size: int = 32) -> "TrainSchedule":
        """SGD lr 0.01, x0.1 at 60% and 80% of training (epochs 30 and 40 of 50)."""
        return cls(epochs, 0.01, 0.9, 0.1, _scaled((30, 40), 50, epochs), batch_size, "pretrain")

    @classmethod
    def finetune(cls, epochs: int = 30, batch_size: int = 32) -> "TrainSchedule":
        """SGD lr 0.001, x0.1 after epochs 20 and 25 of 30 (scaled for other lengths)."""
        return cls(epochs, 0.001, 0.9, 0.1, _scaled((20, 25), 30, epochs), batch_size, "finetune")

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        d = list(self.decay_epochs)
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError(f"decay_epochs must be strictly increasing: {d}")
        if d and (d[0] < 0 or d[-1] >= self.epochs):
            raise ValueError(f"decay_epochs {d} must lie in [0, {self.epochs})")
        if self.phase not in ("pretrain", "finetune"):
            raise ValueError(f"phase must be 'pretrain' or 'finetune', got {self.phase!r}")

    def to_dict(self) -> Dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _scaled(points: Sequence[int], ref_epochs: int, epochs: int) -> Tuple[int, ...]:
    if epochs == ref_epochs:
        return tuple(points)
    out = []
    for p in points:
        e = min(epochs - 1, max(1, int(round(p * epochs / ref_epochs))))
        if not out or e > out[-1]:
            out.append(e)
    return tuple(out)


def lr_at(schedule: TrainSchedule, epoch: int) -> float:
    """``base_lr * decay_factor ** (#decay epochs <= epoch)``; decays apply from their epoch onward."""
    if not 0 <= epoch < schedule.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {schedule.epochs})")
    drops = sum(1 for d in schedule.decay_epochs if d <= epoch)
    inverse = 1.0 / schedule.decay_factor
    if drops and inverse == round(inverse):
        # dividing by an exact integer keeps 0.01 -> 0.001 -> 0.0001 free of drift
        return schedule.base_lr / round(inverse) ** drops
    return schedule.base_lr * schedule.decay_factor**drops


@dataclass
class Dataset:
    """Waveforms with integer labels at one sample rate."""

    signals: List[np.ndarray]
    labels: np.ndarray
    sample_rate: int
    class_names: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.signals)

    @property
    def num_classes(self) -> int:
        return len(self.class_names) if self.class_names else int(self.labels.max()) + 1


def class_frequencies(num_classes: int, low: float = 200.0, high: float = 3000.0) -> np.ndarray:
    """Tone frequencies spaced evenly on the mel scale, one per class."""
    return mel_to_hz(np.linspace(hz_to_mel(low), hz_to_mel(high), num_classes))


def make_synthetic_dataset(
    num_classes: int, samples_per_class: int, seed: int, sample_rate: int = 16000, seconds: float = 2.5, noise: float = 0.05
) -> Dataset:
    """Class ``c`` is a tone at a class-specific mel-spaced frequency plus its octave, with seeded
    amplitude/phase jitter and white noise. Labels cycle round-robin over classes."""
    if num_classes < 1 or samples_per_class < 1:
        raise ValueError("num_classes and samples_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    freqs = class_frequencies(num_classes)
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate
    signals, labels = [], []
    for i in range(num_classes * samples_per_class):
        c = i % num_classes
        f = freqs[c] * (1.0 + rng.uniform(-0.01, 0.01))
        amp = rng.uniform(0.3, 0.6)
        phase = rng.uniform(0, 2 * np.pi, size=2)
        x = amp * np.sin(2 * np.pi * f * t + phase[0]) + 0.5 * amp * np.sin(4 * np.pi * f * t + phase[1])
        x += noise * rng.standard_normal(n)
        signals.append(x.astype(np.float32))
        labels.append(c)
    return Dataset(signals, np.asarray(labels, dtype=np.int64), sample_rate, [f"tone{c}" for c in range(num_classes)])


@dataclass
class EpochStats:
    epoch: int
    lr: float
    loss: float
    top1: float


def prepare_batch(
    dataset: Dataset,
    indices: Sequence[int],
    spec_config: SpectrogramConfig,
    policy: Optional[AugmentPolicy],
    seeds: Optional[Sequence[np.random.SeedSequence]],
) -> np.ndarray:
    """Stack ``(N, 1, T, F)`` inputs; random clip/crop/augment per sample when ``seeds`` is given."""
    specs = []
    for pos, idx in enumerate(indices):
        rng = np.random.default_rng(seeds[pos]) if seeds is not None else None
        spec = spectrogram_for_model(_at_rate(dataset.signals[idx], dataset.sample_rate, spec_config), spec_config, rng)
        if rng is not None and policy is not None and policy.enabled:
            spec = augment(spec, policy.scaled_to(*spec.values.shape), rng)
        specs.append(spec.values)
    return np.stack(specs)[:, None, :, :]


def _at_rate(signal: np.ndarray, rate: int, config: SpectrogramConfig) -> np.ndarray:
    return resample_linear(signal, rate, config.sample_rate)


def train_step(model: AudioInceptionNeXt, batch: np.ndarray, labels: np.ndarray, state: OptimizerState) -> Tuple[float, int]:
    """One forward/backward/SGD step. Returns ``(loss, n_correct)`` measured before the update."""
    params = model.parameters()
    zero_grad(params)
    logits = model(Tensor(batch), training=True)
    loss = ops.softmax_cross_entropy(logits, labels)
    loss.backward()
    sgd_momentum_step(params, state)
    correct = int((np.argmax(logits.data, axis=1) == labels).sum())
    return float(loss.data), correct


def train_epoch(
    model: AudioInceptionNeXt,
    dataset: Dataset,
    schedule: TrainSchedule,
    policy: Optional[AugmentPolicy],
    spec_config: SpectrogramConfig,
    state: OptimizerState,
    epoch: int,
    seed: int,
) -> EpochStats:
    """Shuffle, then per mini-batch: clip -> log-mel -> fit -> augment -> forward -> loss -> backward -> SGD.

    All randomness derives from ``(seed, epoch)`` so reruns are bit-identical.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    schedule.validate()
    state.lr = lr_at(schedule, epoch)
    state.momentum = schedule.momentum
    root = np.random.SeedSequence([seed, epoch])
    order_seed, sample_seed = root.spawn(2)
    order = np.random.default_rng(order_seed).permutation(len(dataset))
    per_sample = sample_seed.spawn(len(dataset))
    total_loss, total_correct = 0.0, 0
    for start in range(0, len(order), schedule.batch_size):
        idx = order[start : start + schedule.batch_size]
        batch = prepare_batch(dataset, idx, spec_config, policy, [per_sample[i] for i in range(start, start + len(idx))])
        loss, correct = train_step(model, batch, dataset.labels[idx], state)
        total_loss += loss * len(idx)
        total_correct += correct
    stats = EpochStats(epoch, state.lr, total_loss / len(dataset), 100.0 * total_correct / len(dataset))
    logger.info("epoch %d lr %.6g loss %.5f top1 %.2f", stats.epoch, stats.lr, stats.loss, stats.top1)
    return stats


@dataclass
class EvalReport:
    top1: float
    top5: float
    mpca: float
    map: float
    mauc: float
    d_prime: float
    num_samples: int
    excluded_mpca: int = 0
    excluded_map: int = 0
    excluded_auc: int = 0
    per_class: List[Tuple[int, int, float]] = field(default_factory=list)  # (class, support, recall %)

    def to_lines(self) -> List[str]:
        lines = [
            f"top1={self.top1:.4f}",
            f"top5={self.top5:.4f}",
            f"mpca={self.mpca:.4f}",
            f"map={self.map:.6f}",
            f"mauc={self.mauc:.6f}",
            f"d_prime={self.d_prime:.6f}",
            f"num_samples={self.num_samples}",
            f"excluded_mpca={self.excluded_mpca}",
            f"excluded_map={self.excluded_map}",
            f"excluded_auc={self.excluded_auc}",
        ]
        lines += [f"class.{c}=support:{n},recall:{r:.4f}" for c, n, r in self.per_class]
        return lines


def report_from_logits(logits: np.ndarray, labels: np.ndarray) -> EvalReport:
    labels = np.asarray(labels).reshape(-1)
    k = logits.shape[1]
    probs = ops.softmax(logits.astype(np.float64))
    preds = np.argmax(logits, axis=1)
    mpca, ex_pca = mean_per_class_accuracy(preds, labels, k)
    mean_ap, ex_ap = mean_average_precision(probs, labels)
    mauc, ex_auc = roc_auc(probs, labels)
    dp = d_prime(min(max(mauc, 1e-12), 1 - 1e-12)) if np.isfinite(mauc) else float("nan")
    per_class = []
    for c in range(k):
        mask = labels == c
        if mask.any():
            per_class.append((c, int(mask.sum()), 100.0 * float((preds[mask] == c).mean())))
    if ex_pca or ex_ap or ex_auc:
        logger.warning("evaluation excluded classes: mpca=%d map=%d auc=%d", ex_pca, ex_ap, ex_auc)
    return EvalReport(
        top1=topk_accuracy(logits, labels, 1),
        top5=topk_accuracy(logits, labels, min(5, k)),
        mpca=mpca,
        map=mean_ap,
        mauc=mauc,
        d_prime=dp,
        num_samples=int(labels.size),
        excluded_mpca=ex_pca,
        excluded_map=ex_ap,
        excluded_auc=ex_auc,
        per_class=per_class,
    )


def predict(model: AudioInceptionNeXt, dataset: Dataset, spec_config: SpectrogramConfig, batch_size: int = 16) -> np.ndarray:
    """Eval-mode logits, one centered clip per sample, no augmentation."""
    out = []
    with no_grad():
        for start in range(0, len(dataset), batch_size):
            idx = np.arange(start, min(start + batch_size, len(dataset)))
            batch = prepare_batch(dataset, idx, spec_config, None, None)
            out.append(model(Tensor(batch), training=False).data)
    return np.concatenate(out) if out else np.zeros((0, model.config.num_classes), np.float32)


def evaluate(model: AudioInceptionNeXt, dataset: Dataset, spec_config: SpectrogramConfig, batch_size: int = 16) -> EvalReport:
    if len(dataset) and (dataset.labels.min() < 0 or dataset.labels.max() >= model.config.num_classes):
        raise ValueError(f"dataset labels fall outside [0, {model.config.num_classes})")
    return report_from_logits(predict(model, dataset, spec_config, batch_size), dataset.labels)


def fit(
    model: AudioInceptionNeXt,
    dataset: Dataset,
    schedule: TrainSchedule,
    policy: Optional[AugmentPolicy],
    spec_config: SpectrogramConfig,
    seed: int,
    state: Optional[OptimizerState] = None,
    log_path: Optional[str] = None,
    stop_at_top1: Optional[float] = None,
    patience: int = 1,
) -> Tuple[List[EpochStats], OptimizerState]:
    """Run ``schedule.epochs`` epochs.

    With ``stop_at_top1`` set, stop once train top-1 has been at or above it for
    ``patience`` consecutive epochs.
    """
    state = state if state is not None else OptimizerState.for_params(model.parameters(), schedule.base_lr, schedule.momentum)
    history = []
    streak = 0
    log = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(schedule.epochs):
            stats = train_epoch(model, dataset, schedule, policy, spec_config, state, epoch, seed)
            history.append(stats)
            if log is not None:
                log.write(format_epoch(stats) + "\n")
                log.flush()
            streak = streak + 1 if stop_at_top1 is not None and stats.top1 >= stop_at_top1 else 0
            if stop_at_top1 is not None and streak >= patience:
                break
    finally:
        if log is not None:
            log.close()
    return history, state


def format_epoch(stats: EpochStats) -> str:
    return f"{stats.epoch}\t{stats.lr:.8g}\t{stats.loss:.6f}\t{stats.top1:.4f}"
