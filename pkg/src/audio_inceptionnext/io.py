"""File formats: RIFF/WAVE input, CSV manifests, AINXSPEC spectrograms, AINX1 checkpoints."""

from __future__ import annotations

import csv
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from .config import coerce_fields
from .dsp import Spectrogram, SpectrogramConfig, resample_linear
from .model import AudioInceptionNeXt, ModelConfig, build_model, replace_head, set_bn_policy
from .optim import OptimizerState
from .train import Dataset

SPEC_MAGIC = b"AINXSPEC"
SPEC_VERSION = 1
CKPT_MAGIC = b"AINX1"
CKPT_VERSION = 1
VELOCITY_PREFIX = "optim.velocity."

WAVE_FORMAT_PCM = 1
WAVE_FORMAT_IEEE_FLOAT = 3
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    """Malformed RIFF/WAVE data; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnsupportedFormatError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


def atomic_write(path, data: bytes) -> None:
    """Write to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------- WAV


@dataclass
class WavClip:
    samples: np.ndarray  # mono float32 in [-1, 1]
    sample_rate: int
    source_path: str = ""


def parse_wav(data: bytes, source: str = "") -> WavClip:
    if len(data) < 12:
        raise WavFormatError("file too short for a RIFF header", len(data))
    if data[0:4] != b"RIFF":
        raise WavFormatError(f"expected 'RIFF', found {data[0:4]!r}", 0)
    if data[8:12] != b"WAVE":
        raise WavFormatError(f"expected 'WAVE', found {data[8:12]!r}", 8)
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if cid == b"fmt ":
            if size < 16 or body + size > len(data):
                raise WavFormatError("truncated 'fmt ' chunk", pos)
            tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag == WAVE_FORMAT_EXTENSIBLE and size >= 40:
                (tag,) = struct.unpack_from("<H", data, body + 24)
            fmt = (tag, channels, rate, block_align, bits)
        elif cid == b"data":
            if fmt is None:
                raise WavFormatError("'data' chunk before 'fmt ' chunk", pos)
            if body + size > len(data):
                raise WavFormatError(f"'data' chunk declares {size} bytes but only {len(data) - body} remain", pos)
            payload = data[body : body + size]
            break
        pos = body + size + (size & 1)
    if fmt is None:
        raise WavFormatError("missing 'fmt ' chunk", pos)
    if payload is None:
        raise WavFormatError("missing 'data' chunk", pos)
    tag, channels, rate, block_align, bits = fmt
    if channels < 1:
        raise WavFormatError("channel count is zero", 22)
    if tag == WAVE_FORMAT_PCM and bits == 16:
        raw = np.frombuffer(payload[: len(payload) // 2 * 2], dtype="<i2").astype(np.float32) / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<f4").astype(np.float32)
    else:
        raise UnsupportedFormatError(f"unsupported WAVE format tag {tag} with {bits} bits per sample")
    frames = raw.size // channels
    if frames == 0:
        raise WavFormatError("'data' chunk holds no complete sample frame", pos)
    samples = raw[: frames * channels].reshape(frames, channels).mean(axis=1).astype(np.float32)
    return WavClip(samples, int(rate), source)


def read_wav(path) -> WavClip:
    """Mono samples from a PCM16 or float32 RIFF/WAVE file (stereo is averaged)."""
    with open(path, "rb") as f:
        return parse_wav(f.read(), str(path))


def wav_bytes(samples: np.ndarray, sample_rate: int, fmt: str = "pcm16") -> bytes:
    """Encode ``samples`` shaped ``(n,)`` or ``(n, channels)``."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    channels = arr.shape[1]
    if fmt == "pcm16":
        tag, bits = WAVE_FORMAT_PCM, 16
        payload = np.clip(np.round(arr * 32768.0), -32768, 32767).astype("<i2").tobytes()
    elif fmt == "float32":
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        payload = arr.astype("<f4").tobytes()
    else:
        raise ValueError(f"unknown wav encoding {fmt!r}")
    block = channels * bits // 8
    header = struct.pack("<4sI4s", b"RIFF", 36 + len(payload), b"WAVE")
    header += struct.pack("<4sIHHIIHH", b"fmt ", 16, tag, channels, sample_rate, sample_rate * block, block, bits)
    header += struct.pack("<4sI", b"data", len(payload))
    return header + payload + (b"\0" if len(payload) & 1 else b"")


def write_wav(path, samples: np.ndarray, sample_rate: int, fmt: str = "pcm16") -> None:
    atomic_write(path, wav_bytes(samples, sample_rate, fmt))


# ---------------------------------------------------------------------- Manifest


@dataclass
class ManifestRow:
    audio_path: str
    label: int
    start_s: Optional[float] = None
    end_s: Optional[float] = None


@dataclass
class Manifest:
    rows: List[ManifestRow] = field(default_factory=list)
    class_names: List[str] = field(default_factory=list)


class ManifestError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def parse_manifest(path, class_names: Optional[List[str]] = None) -> Manifest:
    """CSV with header ``path,label,start,end``; ``start``/``end`` may be empty.

    Relative paths resolve against the manifest's directory. Class names come
    from ``class_names``, a sibling ``classes.txt`` (one per line), or default
    to ``class0..classK``.
    """
    path = Path(path)
    if class_names is None:
        names_file = path.with_name("classes.txt")
        if names_file.exists():
            class_names = [ln.strip() for ln in names_file.read_text(encoding="utf-8").splitlines() if ln.strip()]
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            return Manifest([], list(class_names or []))
        if [h.strip() for h in header[:2]] != ["path", "label"]:
            raise ManifestError(f"expected header 'path,label,start,end', got {','.join(header)!r}", 1)
        for rec in reader:
            line = reader.line_num
            if not rec or all(not c.strip() for c in rec):
                continue
            rec = rec + [""] * (4 - len(rec))
            audio, label, start, end = (c.strip() for c in rec[:4])
            try:
                label_idx = int(label)
            except ValueError:
                raise ManifestError(f"label {label!r} is not an integer", line) from None
            if label_idx < 0 or (class_names is not None and label_idx >= len(class_names)):
                raise ManifestError(f"label {label_idx} out of range", line)
            try:
                start_s = float(start) if start else None
                end_s = float(end) if end else None
            except ValueError:
                raise ManifestError(f"non-numeric start/end {start!r}/{end!r}", line) from None
            if start_s is not None and end_s is not None and not start_s < end_s:
                raise ManifestError(f"start {start_s} must be before end {end_s}", line)
            resolved = Path(audio) if os.path.isabs(audio) else path.parent / audio
            rows.append(ManifestRow(str(resolved), label_idx, start_s, end_s))
    if class_names is None:
        k = max((r.label for r in rows), default=-1) + 1
        class_names = [f"class{i}" for i in range(k)]
    return Manifest(rows, list(class_names))


def write_manifest(path, manifest: Manifest) -> None:
    lines = ["path,label,start,end"]
    base = Path(path).parent
    for r in manifest.rows:
        p = os.path.relpath(r.audio_path, base) if os.path.isabs(r.audio_path) else r.audio_path
        start = "" if r.start_s is None else repr(r.start_s)
        end = "" if r.end_s is None else repr(r.end_s)
        lines.append(f"{p},{r.label},{start},{end}")
    atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def load_manifest_audio(manifest: Manifest):
    """Decode every row into a :class:`~audio_inceptionnext.train.Dataset` at the first file's rate."""
    signals, labels, rate = [], [], None
    for row in manifest.rows:
        clip = read_wav(row.audio_path)
        x = clip.samples
        if row.start_s is not None or row.end_s is not None:
            a = int(round((row.start_s or 0.0) * clip.sample_rate))
            b = int(round(row.end_s * clip.sample_rate)) if row.end_s is not None else x.size
            x = x[a:b] if b > a else x[a : a + 1]
        if rate is None:
            rate = clip.sample_rate
        elif clip.sample_rate != rate:
            x = resample_linear(x, clip.sample_rate, rate)
        signals.append(x)
        labels.append(row.label)
    return Dataset(signals, np.asarray(labels, dtype=np.int64), rate or 16000, list(manifest.class_names))


# ------------------------------------------------------------------- AINXSPEC


def spectrogram_bytes(values: np.ndarray) -> bytes:
    values = np.asarray(values, dtype="<f4")
    if values.ndim != 2:
        raise ValueError(f"spectrogram must be 2-D (T, F), got shape {values.shape}")
    t, f = values.shape
    return SPEC_MAGIC + struct.pack("<HII", SPEC_VERSION, t, f) + np.ascontiguousarray(values).tobytes()


def write_spectrogram(path, spec) -> None:
    values = spec.values if isinstance(spec, Spectrogram) else spec
    atomic_write(path, spectrogram_bytes(values))


def parse_spectrogram(data: bytes) -> np.ndarray:
    head = len(SPEC_MAGIC) + 10
    if len(data) < head or data[: len(SPEC_MAGIC)] != SPEC_MAGIC:
        raise ValueError("not an AINXSPEC file (bad magic)")
    version, t, f = struct.unpack_from("<HII", data, len(SPEC_MAGIC))
    if version != SPEC_VERSION:
        raise ValueError(f"unsupported AINXSPEC version {version}")
    expected = head + 4 * t * f
    if len(data) != expected:
        raise ValueError(f"AINXSPEC payload is {len(data)} bytes, expected {expected} for {t}x{f}")
    return np.frombuffer(data, dtype="<f4", offset=head).reshape(t, f).astype(np.float32)


def read_spectrogram(path, config: Optional[SpectrogramConfig] = None) -> Spectrogram:
    with open(path, "rb") as f:
        return Spectrogram(parse_spectrogram(f.read()), config or SpectrogramConfig())


# --------------------------------------------------------------------- AINX1


def _format_value(v) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return "" if v is None else str(v)


def checkpoint_bytes(tensors: Mapping[str, np.ndarray], meta: Mapping[str, object]) -> bytes:
    text = "".join(f"{k}={_format_value(v)}\n" for k, v in meta.items()).encode("utf-8")
    out = [CKPT_MAGIC, struct.pack("<HI", CKPT_VERSION, len(text)), text, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw_name = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw_name)) + raw_name + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def parse_checkpoint(data: bytes) -> Tuple[Dict[str, str], Dict[str, np.ndarray]]:
    """Decode an AINX1 blob into ``(metadata, tensors)``."""
    if data[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise CheckpointError("not an AINX1 checkpoint (bad magic)")
    pos = len(CKPT_MAGIC)
    try:
        version, meta_len = struct.unpack_from("<HI", data, pos)
        if version != CKPT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos += 6
        if pos + meta_len > len(data):
            raise CheckpointError("metadata block runs past end of file")
        meta = {}
        for line in data[pos : pos + meta_len].decode("utf-8").splitlines():
            if line:
                k, _, v = line.partition("=")
                meta[k] = v
        pos += meta_len
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tensors = {}
        for i in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            name = data[pos + 2 : pos + 2 + nlen].decode("utf-8")
            pos += 2 + nlen
            (rank,) = struct.unpack_from("<B", data, pos)
            shape = struct.unpack_from(f"<{rank}I", data, pos + 1)
            pos += 1 + 4 * rank
            nbytes = 4 * math.prod(shape)
            if pos + nbytes > len(data):
                raise CheckpointError(f"tensor {i} ({name!r}, shape {shape}) needs {nbytes} bytes, only {len(data) - pos} remain")
            tensors[name] = np.frombuffer(data[pos : pos + nbytes], dtype="<f4").reshape(shape).astype(np.float32)
            pos += nbytes
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint near byte {pos}: {exc}") from None
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes after tensor table")
    return meta, tensors


def model_meta(model: AudioInceptionNeXt, spec_config: Optional[SpectrogramConfig] = None, **extra) -> Dict[str, object]:
    meta = {f"model.{k}": v for k, v in model.config.to_dict().items()}
    meta["model.bn_policy"] = model.bn_policy
    if spec_config is not None:
        meta.update({f"spectrogram.{k}": v for k, v in spec_config.to_dict().items()})
    meta.update(extra)
    return meta


def save_checkpoint(
    path,
    model: AudioInceptionNeXt,
    optimizer_state=None,
    meta: Optional[Mapping[str, object]] = None,
    spec_config: Optional[SpectrogramConfig] = None,
) -> None:
    """Write parameters, BN buffers, optional momentum buffers and metadata as AINX1."""
    tensors = dict(model.state_tensors())
    full_meta = dict(model_meta(model, spec_config))
    if optimizer_state is not None:
        full_meta["optim.lr"] = repr(float(optimizer_state.lr))
        full_meta["optim.momentum"] = repr(float(optimizer_state.momentum))
        for name in sorted(optimizer_state.velocity):
            tensors[VELOCITY_PREFIX + name] = optimizer_state.velocity[name]
    full_meta.update(meta or {})
    atomic_write(path, checkpoint_bytes(tensors, full_meta))


def config_from_meta(meta: Mapping[str, str]) -> ModelConfig:
    values = {k[len("model.") :]: v for k, v in meta.items() if k.startswith("model.") and k != "model.bn_policy"}
    return coerce_fields(ModelConfig, values)


def spectrogram_config_from_meta(meta: Mapping[str, str]) -> Optional[SpectrogramConfig]:
    values = {k[len("spectrogram.") :]: v for k, v in meta.items() if k.startswith("spectrogram.")}
    return coerce_fields(SpectrogramConfig, values) if values else None


def load_checkpoint(
    path,
    expected: Optional[ModelConfig] = None,
    num_classes: Optional[int] = None,
    reset_head: bool = False,
    rng: Optional[np.random.Generator] = None,
):
    """Rebuild a model (and optimizer state, when stored) from an AINX1 file.

    ``expected`` turns any architecture difference into a :class:`CheckpointError`
    listing the mismatches. With ``reset_head`` the stored head is dropped and a
    fresh ``num_classes`` head initialized.

    Returns ``(model, optimizer_state_or_None, metadata)``.
    """
    with open(path, "rb") as f:
        meta, tensors = parse_checkpoint(f.read())
    config = config_from_meta(meta)
    if expected is not None:
        diffs = [
            f"{k}: checkpoint={v!r} current={getattr(expected, k)!r}"
            for k, v in config.to_dict().items()
            if v != getattr(expected, k) and not (reset_head and k == "num_classes")
        ]
        if diffs:
            raise CheckpointError("checkpoint does not match current model config: " + "; ".join(diffs))
    model = build_model(config, np.random.default_rng(0))
    own = model.state_tensors()
    problems = []
    for name, target in own.items():
        src = tensors.get(name)
        if src is None:
            problems.append(f"missing tensor {name}")
        elif src.shape != target.shape:
            problems.append(f"{name}: checkpoint shape {src.shape} vs model {target.shape}")
    extra = [n for n in tensors if n not in own and not n.startswith(VELOCITY_PREFIX)]
    problems += [f"unexpected tensor {n}" for n in extra]
    if problems:
        raise CheckpointError("tensor table mismatch: " + "; ".join(problems))
    for name, target in own.items():
        target[...] = tensors[name]
    policy = meta.get("model.bn_policy", "none")
    set_bn_policy(model, policy)
    state = None
    velocity = {n[len(VELOCITY_PREFIX) :]: t for n, t in tensors.items() if n.startswith(VELOCITY_PREFIX)}
    if "optim.lr" in meta:
        state = OptimizerState(lr=float(meta["optim.lr"]), momentum=float(meta["optim.momentum"]), velocity=velocity)
    if reset_head:
        replace_head(model, num_classes or config.num_classes, rng, state)
    elif num_classes is not None and num_classes != config.num_classes:
        raise CheckpointError(f"checkpoint head has {config.num_classes} classes, requested {num_classes}; use reset_head")
    return model, state, meta
