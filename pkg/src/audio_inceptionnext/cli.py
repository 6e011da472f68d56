"""Command-line front end: ``ainx <subcommand> [options]``.

Every subcommand accepts ``--config FILE``, ``--set key=value`` (repeatable),
``--seed`` and ``--out``. Values layer as defaults < config file < flags.
Usage errors exit with status 2, operational failures with status 1.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from .augment import augment
from .config import RunConfig, build_run_config, read_config_file
from .dsp import SpectrogramConfig, log_mel, resample_linear, spectrogram_for_model
from .io import (
    atomic_write,
    load_checkpoint,
    load_manifest_audio,
    parse_checkpoint,
    parse_manifest,
    read_spectrogram,
    read_wav,
    save_checkpoint,
    spectrogram_config_from_meta,
    write_spectrogram,
)
from .model import build_model, set_bn_policy, stage_resolutions
from .optim import OptimizerState
from .profiler import count_params, emit_table, profile
from .train import TrainSchedule, evaluate, fit, format_epoch, make_synthetic_dataset


class CliError(Exception):
    """An operational failure reported as ``error: ...`` with exit status 1."""


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    p.add_argument("--out", help="output path")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="ainx", description="Log-mel audio classification with a multi-scale separable CNN.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("spectrogram", parents=[common], help="WAV to AINXSPEC log-mel matrix")
    p.add_argument("wav")
    p.add_argument("--preset", choices=("pretrain", "finetune"), default="finetune")
    p.add_argument("--full", action="store_true", help="keep the whole recording instead of fitting to the preset's frames")

    p = sub.add_parser("augment", parents=[common], help="apply seeded SpecAugment to an AINXSPEC file")
    p.add_argument("spec")

    p = sub.add_parser("summary", parents=[common], help="print the architecture")
    p.add_argument("--input", default="416x128", help="T x F input extent (default 416x128)")

    p = sub.add_parser("profile", parents=[common], help="per-layer parameter and MAC table")
    p.add_argument("--input", default="416x128", help="T x F input extent (default 416x128)")
    p.add_argument("--format", choices=("text", "csv"), default="text")

    p = sub.add_parser("train", parents=[common], help="train from a manifest or synthetic tones")
    p.add_argument("--phase", choices=("pretrain", "finetune"), default="finetune")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--synthetic", action="store_true")
    p.add_argument("--val-manifest")
    p.add_argument("--classes", type=int, default=4, help="synthetic class count")
    p.add_argument("--samples-per-class", type=int, default=8, help="synthetic samples per class")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--init-checkpoint", help="start from this checkpoint's weights")
    p.add_argument("--reset-head", action="store_true", help="replace the loaded head to fit the dataset's classes")
    p.add_argument("--stop-at-top1", type=float, help="stop once train top-1 reaches this percentage")
    p.add_argument("--patience", type=int, default=1, help="epochs the stop criterion must hold")
    p.add_argument("--log", help="TSV training log (epoch, lr, loss, top1) followed by the evaluation report")

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--synthetic", action="store_true")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--samples-per-class", type=int, default=4)
    p.add_argument("--force", action="store_true", help="evaluate even when spectrogram settings differ from the checkpoint's")

    p = sub.add_parser("inspect-ckpt", parents=[common], help="print checkpoint metadata and tensor table")
    p.add_argument("checkpoint")
    return parser


def _parse_extent(text: str):
    try:
        t, f = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise CliError(f"--input expects TxF, e.g. 416x128, got {text!r}") from None
    return t, f


def _overrides(args) -> Dict[str, str]:
    out = {}
    for item in args.overrides:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        k, _, v = item.partition("=")
        out[k.strip()] = v.strip()
    if args.seed is not None:
        out["seed"] = str(args.seed)
    return out


def _phase_base(phase: str) -> RunConfig:
    if phase == "pretrain":
        return RunConfig(spectrogram=SpectrogramConfig.pretrain(), schedule=TrainSchedule.pretrain())
    return RunConfig(spectrogram=SpectrogramConfig.finetune(), schedule=TrainSchedule.finetune())


def load_run_config(args, base: Optional[RunConfig] = None, extra: Optional[Dict[str, str]] = None) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    flags = dict(extra or {})
    flags.update(_overrides(args))
    try:
        cfg = build_run_config(file_values, flags, base)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    return cfg


def _write_text(path: Optional[str], text: str, stdout) -> None:
    if path:
        atomic_write(path, text.encode("utf-8"))
    else:
        stdout.write(text)


def cmd_spectrogram(args, stdout) -> None:
    if not args.out:
        raise CliError("spectrogram needs --out")
    cfg = load_run_config(args, _phase_base(args.preset))
    spec_cfg = cfg.spectrogram.resolved()
    clip = read_wav(args.wav)
    signal = clip.samples
    if clip.sample_rate != spec_cfg.sample_rate:
        signal = resample_linear(signal, clip.sample_rate, spec_cfg.sample_rate)
    spec = log_mel(signal, spec_cfg) if args.full else spectrogram_for_model(signal, spec_cfg)
    write_spectrogram(args.out, spec)
    t, f = spec.shape
    stdout.write(f"wrote {args.out}: {t}x{f}\n")


def cmd_augment(args, stdout) -> None:
    if not args.out:
        raise CliError("augment needs --out")
    cfg = load_run_config(args)
    spec = read_spectrogram(args.spec, cfg.spectrogram)
    t, f = spec.shape
    policy = cfg.augment.scaled_to(t, f)
    events: List[str] = []
    out = augment(spec, policy, np.random.default_rng(cfg.seed), events)
    write_spectrogram(args.out, out)
    stdout.write(f"wrote {args.out}: {t}x{f} seed={cfg.seed}" + (f" events={','.join(events)}" if events else "") + "\n")


def cmd_summary(args, stdout) -> None:
    cfg = load_run_config(args)
    mc = cfg.model
    t, f = _parse_extent(args.input)
    model = build_model(mc, np.random.default_rng(cfg.seed))
    lines = [f"AudioInceptionNeXt  input 1x{mc.in_channels}x{t}x{f}  classes {mc.num_classes}"]
    res = dict((name, (h, w)) for name, h, w in stage_resolutions(mc, t, f))
    h, w = res["stem.pool"]
    lines.append(f"stem     conv {mc.stem_kernel[0]}x{mc.stem_kernel[1]} s{mc.stem_stride[0]} -> {mc.stem_out} ch, BN, ReLU, maxpool 3x3 s2  out {h}x{w}")
    for i, (ch, depth) in enumerate(zip(mc.stage_channels, mc.stage_depths), 1):
        name = f"stage{i}"
        stage_params = sum(p.data.size for n, p in model.parameters().items() if n.startswith(name + "."))
        h, w = res[name]
        lines.append(
            f"{name}   {depth} blocks x {ch} ch  expansion {mc.expansion}  kernels {','.join(map(str, mc.branch_kernels))}"
            f"  out {h}x{w}  params {stage_params}"
        )
    lines.append(f"head     global avg pool -> linear {mc.stage_channels[-1]} -> {mc.num_classes}")
    lines.append(f"total params {count_params(model)}")
    stdout.write("\n".join(lines) + "\n")


def cmd_profile(args, stdout) -> None:
    cfg = load_run_config(args)
    t, f = _parse_extent(args.input)
    model = build_model(cfg.model, np.random.default_rng(cfg.seed))
    report = profile(model, (1, cfg.model.in_channels, t, f))
    _write_text(args.out, emit_table(report, args.format), stdout)


def _dataset_for(args, cfg: RunConfig, seed: int, samples_per_class: int):
    if args.manifest:
        return load_manifest_audio(parse_manifest(args.manifest))
    return make_synthetic_dataset(args.classes, samples_per_class, seed, sample_rate=cfg.spectrogram.sample_rate)


def cmd_train(args, stdout) -> None:
    extra = {}
    if args.epochs is not None:
        extra["schedule.epochs"] = str(args.epochs)
    if args.batch_size is not None:
        extra["schedule.batch_size"] = str(args.batch_size)
    if args.lr is not None:
        extra["schedule.base_lr"] = str(args.lr)
    if args.no_augment:
        extra["augment.enabled"] = "false"
    base = _phase_base(args.phase)
    # Decay points follow the requested epoch count unless set explicitly.
    file_values = read_config_file(args.config) if args.config else {}
    layered = {**file_values, **extra, **_overrides(args)}
    if "schedule.epochs" in layered and "schedule.decay_epochs" not in layered:
        epochs = int(layered["schedule.epochs"])
        sched = TrainSchedule.pretrain(epochs) if args.phase == "pretrain" else TrainSchedule.finetune(epochs)
        base = dataclasses.replace(base, schedule=sched)
    cfg = load_run_config(args, base, extra)
    dataset = _dataset_for(args, cfg, cfg.seed, args.samples_per_class)
    if dataset.num_classes < 1 or len(dataset) == 0:
        raise CliError("training set is empty")
    mc = dataclasses.replace(cfg.model, num_classes=dataset.num_classes)
    cfg = dataclasses.replace(cfg, model=mc)
    try:
        cfg.validate()
    except ValueError as exc:
        raise CliError(f"invalid configuration: {exc}") from None
    policy = cfg.augment.scaled_to(cfg.spectrogram.target_frames, cfg.spectrogram.n_mels) if cfg.augment.enabled else None
    state = None
    if args.init_checkpoint:
        model, state, _ = load_checkpoint(
            args.init_checkpoint, num_classes=dataset.num_classes, reset_head=args.reset_head, rng=np.random.default_rng(cfg.seed)
        )
        if state is not None:
            state.lr = cfg.schedule.base_lr
            state.momentum = cfg.schedule.momentum
    else:
        model = build_model(mc, np.random.default_rng(cfg.seed))
    if args.phase == "finetune":
        set_bn_policy(model, "freeze_all_except_stem_first")
    if state is None:
        state = OptimizerState.for_params(model.parameters(), cfg.schedule.base_lr, cfg.schedule.momentum)
    state.velocity.update(
        {n: np.zeros_like(p.data) for n, p in model.parameters().items() if n not in state.velocity}
    )
    if args.log:
        atomic_write(args.log, b"epoch\tlr\tloss\ttop1\n")
    history, state = fit(
        model, dataset, cfg.schedule, policy, cfg.spectrogram, cfg.seed, state, args.log, args.stop_at_top1, args.patience
    )
    for stats in history:
        stdout.write(format_epoch(stats) + "\n")
    if args.val_manifest:
        held = load_manifest_audio(parse_manifest(args.val_manifest))
    elif args.synthetic:
        held = make_synthetic_dataset(args.classes, max(1, args.samples_per_class // 2), cfg.seed + 1, sample_rate=cfg.spectrogram.sample_rate)
    else:
        held = dataset
    report = evaluate(model, held, cfg.spectrogram)
    lines = report.to_lines()
    if args.log:
        with open(args.log, "a", encoding="utf-8") as f:
            f.write("".join(f"# {ln}\n" for ln in lines))
    stdout.write("\n".join(lines) + "\n")
    if args.out:
        save_checkpoint(
            args.out,
            model,
            state,
            meta={"train.phase": args.phase, "train.epochs_run": len(history), "seed": cfg.seed},
            spec_config=cfg.spectrogram,
        )
        stdout.write(f"wrote {args.out}\n")


def cmd_eval(args, stdout) -> None:
    model, _, meta = load_checkpoint(args.checkpoint)
    stored = spectrogram_config_from_meta(meta)
    base = RunConfig(spectrogram=stored) if stored is not None else RunConfig()
    cfg = load_run_config(args, base)
    if stored is not None and cfg.spectrogram.to_dict() != stored.to_dict():
        diffs = [f"{k}: checkpoint={v!r} requested={cfg.spectrogram.to_dict()[k]!r}" for k, v in stored.to_dict().items() if v != cfg.spectrogram.to_dict()[k]]
        message = "spectrogram settings differ from the checkpoint: " + "; ".join(diffs)
        if not args.force:
            raise CliError(message + " (pass --force to evaluate anyway)")
        sys.stderr.write("warning: " + message + "\n")
    dataset = _dataset_for(args, cfg, cfg.seed + 1, args.samples_per_class)
    if dataset.num_classes > model.config.num_classes:
        raise CliError(f"dataset has {dataset.num_classes} classes but the checkpoint head has {model.config.num_classes}")
    report = evaluate(model, dataset, cfg.spectrogram)
    _write_text(args.out, "\n".join(report.to_lines()) + "\n", stdout)


def cmd_inspect(args, stdout) -> None:
    with open(args.checkpoint, "rb") as f:
        meta, tensors = parse_checkpoint(f.read())
    lines = [f"{k}={v}" for k, v in meta.items()]
    total = 0
    lines.append(f"tensors={len(tensors)}")
    for name, arr in tensors.items():
        total += arr.size
        lines.append(f"{name}\t{'x'.join(map(str, arr.shape))}\t{arr.size}")
    lines.append(f"values={total}")
    _write_text(args.out, "\n".join(lines) + "\n", stdout)


COMMANDS = {
    "spectrogram": cmd_spectrogram,
    "augment": cmd_augment,
    "summary": cmd_summary,
    "profile": cmd_profile,
    "train": cmd_train,
    "eval": cmd_eval,
    "inspect-ckpt": cmd_inspect,
}


def cli_main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args, stdout)
    except (CliError, ValueError, OSError) as exc:
        stderr.write(f"error: {exc}\n")
        return 1
    return 0


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
