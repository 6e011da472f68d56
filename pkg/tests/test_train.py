import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from audio_inceptionnext.augment import AugmentPolicy
from audio_inceptionnext.dsp import SpectrogramConfig, log_mel
from audio_inceptionnext.model import ModelConfig, build_model, set_bn_policy
from audio_inceptionnext.optim import OptimizerState
from audio_inceptionnext.train import (
    Dataset,
    TrainSchedule,
    evaluate,
    fit,
    lr_at,
    make_synthetic_dataset,
    prepare_batch,
    report_from_logits,
    train_epoch,
    train_step,
)

TINY = dict(stem_out=8, stage_channels=(8, 8, 16, 16), stage_depths=(1, 1, 1, 1), branch_kernels=(3, 5))
SPEC = SpectrogramConfig.finetune()


def tiny_model(num_classes=3, seed=0):
    return build_model(ModelConfig(num_classes=num_classes, **TINY), np.random.default_rng(seed))


def test_lr_schedules_exact():
    pre = TrainSchedule.pretrain()
    assert [lr_at(pre, e) for e in (0, 29, 30, 39, 40, 49)] == [0.01, 0.01, 0.001, 0.001, 0.0001, 0.0001]
    fine = TrainSchedule.finetune()
    assert [lr_at(fine, e) for e in (0, 19, 20, 24, 25, 29)] == [0.001, 0.001, 0.0001, 0.0001, 0.00001, 0.00001]
    with pytest.raises(ValueError):
        lr_at(fine, 30)
    halving = TrainSchedule(epochs=4, base_lr=0.3, decay_factor=0.5, decay_epochs=(1, 2))
    assert [lr_at(halving, e) for e in range(4)] == [0.3, 0.15, 0.075, 0.075]


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 200), st.sampled_from(["pretrain", "finetune"]))
def test_lr_non_increasing_with_all_drops(epochs, phase):
    sched = getattr(TrainSchedule, phase)(epochs)
    sched.validate()
    lrs = [lr_at(sched, e) for e in range(epochs)]
    drops = sum(1 for a, b in zip(lrs, lrs[1:]) if b < a)
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))
    assert drops == len(sched.decay_epochs)


def test_schedule_validation():
    with pytest.raises(ValueError):
        TrainSchedule(epochs=10, decay_epochs=(5, 3)).validate()
    with pytest.raises(ValueError):
        TrainSchedule(epochs=10, decay_epochs=(12,)).validate()
    with pytest.raises(ValueError):
        TrainSchedule(phase="warmup").validate()


def test_synthetic_dataset_properties():
    a = make_synthetic_dataset(4, 3, seed=7)
    b = make_synthetic_dataset(4, 3, seed=7)
    assert len(a) == 12 and list(a.labels[:5]) == [0, 1, 2, 3, 0]
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.signals, b.signals))
    assert all(x.size >= int(2.08 * 16000) for x in a.signals)
    peaks = [int(log_mel(a.signals[c], SPEC).values.mean(axis=0).argmax()) for c in range(4)]
    assert len(set(peaks)) == 4
    with pytest.raises(ValueError):
        make_synthetic_dataset(0, 3, seed=0)


def test_zero_lr_leaves_parameters_unchanged():
    model = tiny_model()
    data = make_synthetic_dataset(3, 1, seed=0)
    single = Dataset(data.signals[:1], data.labels[:1], data.sample_rate)
    before = {n: p.data.copy() for n, p in model.named_parameters()}
    sched = TrainSchedule(epochs=1, base_lr=0.0, decay_epochs=(), batch_size=4)
    train_epoch(model, single, sched, None, SPEC, OptimizerState.for_params(model.parameters(), 0.0), 0, seed=1)
    for n, p in model.named_parameters():
        assert p.data.tobytes() == before[n].tobytes(), n


def test_loss_decreases_on_fixed_batch():
    model = tiny_model()
    data = make_synthetic_dataset(3, 2, seed=0)
    batch = prepare_batch(data, range(len(data)), SPEC, None, None)
    state = OptimizerState.for_params(model.parameters(), 1e-3)
    losses = [train_step(model, batch, data.labels, state)[0] for _ in range(6)]
    assert sum(b < a for a, b in zip(losses, losses[1:])) >= 4


def test_training_is_deterministic():
    data = make_synthetic_dataset(3, 2, seed=0)
    sched = TrainSchedule(epochs=2, base_lr=0.01, decay_epochs=(1,), batch_size=4, phase="finetune")
    policy = AugmentPolicy().scaled_to(416, 128)
    states = []
    for _ in range(2):
        model = tiny_model()
        fit(model, data, sched, policy, SPEC, seed=5)
        states.append(b"".join(a.tobytes() for a in model.state_tensors().values()))
    assert states[0] == states[1]


def test_frozen_bn_bit_unchanged_over_epoch():
    model = tiny_model()
    set_bn_policy(model, "freeze_all_except_stem_first")
    frozen = {n: bn for n, bn in model.batch_norms() if bn.frozen}
    before = {n: (bn.gamma.data.copy(), bn.beta.data.copy(), bn.running_mean.copy(), bn.running_var.copy()) for n, bn in frozen.items()}
    stem_var = model.stem.bn.running_var.copy()
    data = make_synthetic_dataset(3, 2, seed=0)
    sched = TrainSchedule(epochs=1, base_lr=0.01, decay_epochs=(), batch_size=3, phase="finetune")
    fit(model, data, sched, None, SPEC, seed=0)
    for n, bn in frozen.items():
        now = (bn.gamma.data, bn.beta.data, bn.running_mean, bn.running_var)
        assert all(a.tobytes() == b.tobytes() for a, b in zip(before[n], now)), n
    assert not np.array_equal(stem_var, model.stem.bn.running_var)


def test_empty_dataset_rejected():
    empty = Dataset([], np.zeros(0, np.int64), 16000)
    model = tiny_model()
    with pytest.raises(ValueError, match="empty"):
        train_epoch(model, empty, TrainSchedule(epochs=1, decay_epochs=()), None, SPEC, OptimizerState(0.1), 0, 0)


def test_evaluate_permutation_invariant():
    model = tiny_model()
    data = make_synthetic_dataset(3, 2, seed=3)
    perm = np.random.default_rng(0).permutation(len(data))
    shuffled = Dataset([data.signals[i] for i in perm], data.labels[perm], data.sample_rate)
    a, b = evaluate(model, data, SPEC), evaluate(model, shuffled, SPEC)
    for key in ("top1", "top5", "mpca", "map", "mauc"):
        assert getattr(a, key) == pytest.approx(getattr(b, key), abs=1e-9)


def test_evaluate_rejects_out_of_range_labels():
    data = make_synthetic_dataset(4, 1, seed=0)
    with pytest.raises(ValueError, match="labels"):
        evaluate(tiny_model(num_classes=3), data, SPEC)


def test_perfect_report():
    labels = np.array([0, 1, 2, 0, 1, 2])
    rep = report_from_logits(np.eye(3)[labels] * 10.0, labels)
    assert (rep.top1, rep.top5, rep.mpca, rep.map, rep.mauc) == (100.0, 100.0, 100.0, 1.0, 1.0)
    assert rep.num_samples == 6 and len(rep.per_class) == 3
    assert "top1=100.0000" in rep.to_lines()


def test_stop_at_top1_with_patience(monkeypatch):
    import audio_inceptionnext.train as train_mod
    from audio_inceptionnext.train import EpochStats

    seen = []

    def fake_epoch(model, dataset, schedule, policy, spec_config, state, epoch, seed):
        seen.append(epoch)
        return EpochStats(epoch, 0.1, 1.0, 100.0 if epoch >= 2 else 50.0)

    monkeypatch.setattr(train_mod, "train_epoch", fake_epoch)
    history, _ = fit(tiny_model(), make_synthetic_dataset(3, 1, 0), TrainSchedule(epochs=20, decay_epochs=()), None, SPEC, 0, stop_at_top1=100.0, patience=3)
    assert seen == [0, 1, 2, 3, 4] and len(history) == 5
