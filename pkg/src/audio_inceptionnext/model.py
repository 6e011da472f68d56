"""AudioInceptionNeXt network: stem, four stages of multi-scale separable blocks, linear head."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from . import ops
from .ops import ConvSpec
from .tensor import Tensor

BN_POLICIES = ("freeze_all_except_stem_first", "none")


@dataclass
class ModelConfig:
    in_channels: int = 1
    stem_kernel: Tuple[int, int] = (5, 7)
    stem_stride: Tuple[int, int] = (2, 2)
    stem_out: int = 64
    stage_channels: Tuple[int, ...] = (64, 128, 256, 512)
    stage_depths: Tuple[int, ...] = (3, 4, 6, 3)
    expansion: int = 4
    branch_kernels: Tuple[int, ...] = (3, 11, 21)
    downsample_stride: int = 2
    num_classes: int = 44

    def validate(self) -> None:
        problems = []
        if len(self.stage_channels) != 4:
            problems.append(f"stage_channels must have 4 entries, got {len(self.stage_channels)}")
        if len(self.stage_depths) != 4:
            problems.append(f"stage_depths must have 4 entries, got {len(self.stage_depths)}")
        if any(c < 1 for c in self.stage_channels):
            problems.append(f"stage_channels must be positive: {self.stage_channels}")
        if any(d < 1 for d in self.stage_depths):
            problems.append(f"stage_depths must be positive: {self.stage_depths}")
        if self.expansion < 1:
            problems.append(f"expansion must be >= 1, got {self.expansion}")
        if not self.branch_kernels or any(k < 1 or k % 2 == 0 for k in self.branch_kernels):
            problems.append(f"branch kernels must be positive odd sizes: {self.branch_kernels}")
        if len(set(self.branch_kernels)) != len(self.branch_kernels):
            problems.append(f"branch kernels must be distinct: {self.branch_kernels}")
        if self.num_classes < 1:
            problems.append(f"num_classes must be >= 1, got {self.num_classes}")
        if self.in_channels < 1 or self.stem_out < 1:
            problems.append("in_channels and stem_out must be positive")
        if min(self.stem_kernel) < 1 or min(self.stem_stride) < 1 or self.downsample_stride < 1:
            problems.append("stem kernel/stride and downsample stride must be positive")
        if problems:
            raise ValueError("invalid ModelConfig: " + "; ".join(problems))

    def to_dict(self) -> Dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class Module:
    """Container with named parameters, buffers, and child modules."""

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._buffers: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self._children: "OrderedDict[str, Module]" = OrderedDict()

    def add_param(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(prefix + cname + ".")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, b in self._buffers.items():
            yield prefix + name, b
        for cname, child in self._children.items():
            yield from child.named_buffers(prefix + cname + ".")

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix.rstrip("."), self
        for cname, child in self._children.items():
            yield from child.named_modules(prefix + cname + ".")


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, kernel: Tuple[int, int], stride=(1, 1), padding=(0, 0), groups: int = 1, bias: bool = False):
        super().__init__()
        self.in_channels, self.out_channels = cin, cout
        self.spec = ConvSpec(kernel[0], kernel[1], stride[0], stride[1], padding[0], padding[1], groups)
        self.weight = self.add_param("weight", np.zeros((cout, cin // groups, kernel[0], kernel[1]), np.float32))
        self.bias = self.add_param("bias", np.zeros(cout, np.float32)) if bias else None

    @property
    def fan_in(self) -> int:
        return self.weight.shape[1] * self.spec.kernel_h * self.spec.kernel_w

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.spec)


class BatchNorm2d(Module):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.channels, self.eps, self.momentum = channels, eps, momentum
        self.gamma = self.add_param("gamma", np.ones(channels, np.float32))
        self.beta = self.add_param("beta", np.zeros(channels, np.float32))
        self._buffers["running_mean"] = np.zeros(channels, np.float32)
        self._buffers["running_var"] = np.ones(channels, np.float32)
        self.frozen = False

    @property
    def running_mean(self) -> np.ndarray:
        return self._buffers["running_mean"]

    @property
    def running_var(self) -> np.ndarray:
        return self._buffers["running_var"]

    def set_frozen(self, frozen: bool) -> None:
        self.frozen = frozen
        self.gamma.requires_grad = not frozen
        self.beta.requires_grad = not frozen

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        mode = "frozen" if self.frozen else ("train" if training else "eval")
        return ops.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, mode, self.eps, self.momentum)


class Linear(Module):
    def __init__(self, din: int, dout: int):
        super().__init__()
        self.in_features, self.out_features = din, dout
        self.weight = self.add_param("weight", np.zeros((dout, din), np.float32))
        self.bias = self.add_param("bias", np.zeros(dout, np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class SeparableBranch(Module):
    """Depthwise ``1 x k`` then ``k x 1`` convolution, each followed by BN and ReLU."""

    def __init__(self, channels: int, k: int):
        super().__init__()
        self.kernel = k
        pad = k // 2
        self.dw_1xk = self.add_child("dw_1xk", Conv2d(channels, channels, (1, k), padding=(0, pad), groups=channels))
        self.bn_1xk = self.add_child("bn_1xk", BatchNorm2d(channels))
        self.dw_kx1 = self.add_child("dw_kx1", Conv2d(channels, channels, (k, 1), padding=(pad, 0), groups=channels))
        self.bn_kx1 = self.add_child("bn_kx1", BatchNorm2d(channels))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        x = ops.relu(self.bn_1xk(self.dw_1xk(x), training))
        return ops.relu(self.bn_kx1(self.dw_kx1(x), training))


class InceptionNeXtBlock(Module):
    """Residual block: summed multi-scale branches, 1x1 expand, ReLU, 1x1 squeeze, BN."""

    def __init__(self, channels: int, expansion: int = 4, kernels=(3, 11, 21)):
        super().__init__()
        self.channels = channels
        self.hidden = expansion * channels
        self.branches: List[SeparableBranch] = [
            self.add_child(f"branch{k}", SeparableBranch(channels, k)) for k in kernels
        ]
        self.expand = self.add_child("expand", Conv2d(channels, self.hidden, (1, 1), bias=True))
        self.squeeze = self.add_child("squeeze", Conv2d(self.hidden, channels, (1, 1)))
        self.bn_out = self.add_child("bn_out", BatchNorm2d(channels))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ValueError(f"block expects {self.channels} channels, got input shape {x.shape}")
        mixed = self.branches[0](x, training)
        for branch in self.branches[1:]:
            mixed = ops.add(mixed, branch(x, training))
        h = ops.relu(self.expand(mixed))
        return ops.add(x, self.bn_out(self.squeeze(h), training))


class Stage(Module):
    def __init__(self, cin: int, cout: int, depth: int, stride: int, expansion: int, kernels):
        super().__init__()
        self.downsample: Optional[Conv2d] = None
        self.downsample_bn: Optional[BatchNorm2d] = None
        if stride != 1 or cin != cout:
            self.downsample = self.add_child("downsample", Conv2d(cin, cout, (1, 1), stride=(stride, stride)))
            self.downsample_bn = self.add_child("downsample_bn", BatchNorm2d(cout))
        self.blocks: List[InceptionNeXtBlock] = [
            self.add_child(f"block{i + 1}", InceptionNeXtBlock(cout, expansion, kernels)) for i in range(depth)
        ]

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if self.downsample is not None:
            x = self.downsample_bn(self.downsample(x), training)
        for block in self.blocks:
            x = block(x, training)
        return x


class Stem(Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        kh, kw = cfg.stem_kernel
        self.conv = self.add_child("conv", Conv2d(cfg.in_channels, cfg.stem_out, (kh, kw), cfg.stem_stride, (kh // 2, kw // 2)))
        self.bn = self.add_child("bn", BatchNorm2d(cfg.stem_out))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        x = ops.relu(self.bn(self.conv(x), training))
        return ops.max_pool2d(x, kernel=3, stride=2, padding=1)


class AudioInceptionNeXt(Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.stem = self.add_child("stem", Stem(config))
        self.stages: List[Stage] = []
        cin = config.stem_out
        for i, (c, d) in enumerate(zip(config.stage_channels, config.stage_depths)):
            stride = 1 if i == 0 else config.downsample_stride
            self.stages.append(self.add_child(f"stage{i + 1}", Stage(cin, c, d, stride, config.expansion, config.branch_kernels)))
            cin = c
        self.head = self.add_child("head", Linear(cin, config.num_classes))
        self.bn_policy = "none"

    def parameters(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict(self.named_parameters())

    def buffers(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict(self.named_buffers())

    def batch_norms(self) -> List[Tuple[str, BatchNorm2d]]:
        return [(n, m) for n, m in self.named_modules() if isinstance(m, BatchNorm2d)]

    def state_tensors(self) -> "OrderedDict[str, np.ndarray]":
        """Every learnable tensor and running statistic, keyed by hierarchical name."""
        out = OrderedDict((n, p.data) for n, p in self.named_parameters())
        out.update(self.named_buffers())
        return out

    def features(self, x: Tensor, training: bool = False) -> Tensor:
        x = self.stem(x, training)
        for stage in self.stages:
            x = stage(x, training)
        return x

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        check_input_shape(self.config, x.shape)
        return self.head(ops.global_avg_pool(self.features(x, training)))


def stage_resolutions(config: ModelConfig, height: int, width: int) -> List[Tuple[str, int, int]]:
    """Spatial extents after the stem and after each stage, by floor arithmetic."""
    kh, kw = config.stem_kernel
    sh, sw = config.stem_stride
    res = []
    h = (height + 2 * (kh // 2) - kh) // sh + 1
    w = (width + 2 * (kw // 2) - kw) // sw + 1
    res.append(("stem.conv", h, w))
    h, w = (h + 2 - 3) // 2 + 1, (w + 2 - 3) // 2 + 1
    res.append(("stem.pool", h, w))
    for i in range(len(config.stage_channels)):
        if i > 0:
            s = config.downsample_stride
            h, w = (h - 1) // s + 1, (w - 1) // s + 1
        res.append((f"stage{i + 1}", h, w))
    return res


def check_input_shape(config: ModelConfig, shape: Tuple[int, ...]) -> None:
    if len(shape) != 4:
        raise ValueError(f"model input must be (N, {config.in_channels}, T, F), got {shape}")
    if shape[1] != config.in_channels:
        raise ValueError(f"model expects {config.in_channels} input channel(s), got {shape[1]}")
    h, w = shape[2], shape[3]
    for name, rh, rw in stage_resolutions(config, h, w):
        if rh < 1 or rw < 1:
            raise ValueError(f"input {h}x{w} collapses to {rh}x{rw} at {name}")


def build_model(config: ModelConfig, rng: Optional[np.random.Generator] = None) -> AudioInceptionNeXt:
    """Construct the network and initialize it (seed 0 when ``rng`` is omitted)."""
    model = AudioInceptionNeXt(config)
    init_parameters(model, rng if rng is not None else np.random.default_rng(0))
    return model


def _init_weight(mod: Module, rng: np.random.Generator) -> None:
    fan_in = mod.fan_in if isinstance(mod, Conv2d) else mod.in_features
    bound = np.sqrt(6.0 / fan_in)
    mod.weight.data[...] = rng.uniform(-bound, bound, mod.weight.shape)
    if mod.bias is not None:
        b = 1.0 / np.sqrt(fan_in)
        mod.bias.data[...] = rng.uniform(-b, b, mod.bias.shape)


def init_parameters(model: AudioInceptionNeXt, rng: np.random.Generator, scheme: str = "he_uniform") -> None:
    """He-uniform weights (``U(-sqrt(6/fan_in), +)``), BN gamma=1/beta=0.

    Each block's output BN starts at gamma=0 so blocks are identity maps at init.
    """
    if scheme != "he_uniform":
        raise ValueError(f"unknown init scheme {scheme!r}")
    for _, mod in model.named_modules():
        if isinstance(mod, (Conv2d, Linear)):
            _init_weight(mod, rng)
        elif isinstance(mod, BatchNorm2d):
            mod.gamma.data[...] = 1.0
            mod.beta.data[...] = 0.0
            mod.running_mean[...] = 0.0
            mod.running_var[...] = 1.0
    for _, mod in model.named_modules():
        if isinstance(mod, InceptionNeXtBlock):
            mod.bn_out.gamma.data[...] = 0.0


def replace_head(model: AudioInceptionNeXt, num_classes: int, rng: Optional[np.random.Generator] = None, optimizer_state=None) -> AudioInceptionNeXt:
    """Swap in a freshly initialized linear head with ``num_classes`` outputs (in place)."""
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    head = Linear(model.head.in_features, num_classes)
    _init_weight(head, rng if rng is not None else np.random.default_rng(0))
    model.head = model._children["head"] = head
    model.config = replace(model.config, num_classes=num_classes)
    if optimizer_state is not None:
        optimizer_state.discard("head.")
    return model


def set_bn_policy(model: AudioInceptionNeXt, policy: str) -> None:
    """``freeze_all_except_stem_first`` freezes every BN but the stem's; ``none`` unfreezes all."""
    if policy not in BN_POLICIES:
        raise ValueError(f"unknown BN policy {policy!r}; expected one of {BN_POLICIES}")
    for name, bn in model.batch_norms():
        bn.set_frozen(policy != "none" and name != "stem.bn")
    model.bn_policy = policy


def trainable_batch_norms(model: AudioInceptionNeXt) -> List[str]:
    return [name for name, bn in model.batch_norms() if not bn.frozen]
