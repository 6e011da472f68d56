"""Differentiable ops for the AudioInceptionNeXt layer set.

Every op takes and returns :class:`~audio_inceptionnext.tensor.Tensor` objects,
keeps the dtype of its inputs, and raises ``ValueError`` on shape problems.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import convolve1d, correlate1d

from .tensor import Tensor, make_result


@dataclass(frozen=True)
class ConvSpec:
    kernel_h: int
    kernel_w: int
    stride_h: int = 1
    stride_w: int = 1
    pad_h: int = 0
    pad_w: int = 0
    groups: int = 1

    def __post_init__(self):
        for field in ("kernel_h", "kernel_w", "stride_h", "stride_w", "groups"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be positive, got {getattr(self, field)}")
        if self.pad_h < 0 or self.pad_w < 0:
            raise ValueError(f"padding must be non-negative, got ({self.pad_h}, {self.pad_w})")

    def output_hw(self, h: int, w: int) -> tuple:
        oh = (h + 2 * self.pad_h - self.kernel_h) // self.stride_h + 1
        ow = (w + 2 * self.pad_w - self.kernel_w) // self.stride_w + 1
        if oh < 1:
            raise ValueError(f"conv output height collapses: H={h}, kernel_h={self.kernel_h}, pad_h={self.pad_h}")
        if ow < 1:
            raise ValueError(f"conv output width collapses: W={w}, kernel_w={self.kernel_w}, pad_w={self.pad_w}")
        return oh, ow


def _window(xp: np.ndarray, i: int, j: int, oh: int, ow: int, sh: int, sw: int) -> np.ndarray:
    return xp[..., i : i + sh * (oh - 1) + 1 : sh, j : j + sw * (ow - 1) + 1 : sw]


def _pad(x: np.ndarray, ph: int, pw: int, value: float = 0.0) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=value)


def _im2col(xp: np.ndarray, kh: int, kw: int, oh: int, ow: int, sh: int, sw: int) -> np.ndarray:
    """Patches of ``xp`` as ``(N, C, kh, kw, OH, OW)``; a strided view when the kernel is 1x1."""
    if kh == 1 and kw == 1:
        return np.ascontiguousarray(xp[:, :, : sh * (oh - 1) + 1 : sh, : sw * (ow - 1) + 1 : sw])
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = _window(xp, i, j, oh, ow, sh, sw)
    return cols


def _separable_axis(spec: ConvSpec) -> Optional[int]:
    """Axis (1=H, 2=W of an (N, H, W) slice) of a stride-1 "same" 1-D kernel, else None."""
    if spec.stride_h != 1 or spec.stride_w != 1:
        return None
    if spec.kernel_h == 1 and spec.pad_h == 0 and spec.kernel_w % 2 and spec.pad_w == spec.kernel_w // 2:
        return 2
    if spec.kernel_w == 1 and spec.pad_w == 0 and spec.kernel_h % 2 and spec.pad_h == spec.kernel_h // 2:
        return 1
    return None


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor], spec: ConvSpec) -> Tensor:
    """Grouped 2-D cross-correlation with zero padding.

    ``weight`` has shape ``(Cout, Cin // groups, kh, kw)``; ``groups == Cin == Cout``
    is a depthwise convolution.
    """
    if x.ndim != 4:
        raise ValueError(f"conv2d input must be 4-D (N,C,H,W), got shape {x.shape}")
    n, cin, h, w = x.shape
    cout, cg, kh, kw = weight.shape
    g = spec.groups
    if cin % g:
        raise ValueError(f"input channels {cin} not divisible by groups {g}")
    if cout % g:
        raise ValueError(f"output channels {cout} not divisible by groups {g}")
    if cg != cin // g:
        raise ValueError(f"weight in-channel dim {cg} != Cin/groups = {cin // g}")
    if (kh, kw) != (spec.kernel_h, spec.kernel_w):
        raise ValueError(f"weight kernel {(kh, kw)} != spec kernel {(spec.kernel_h, spec.kernel_w)}")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"bias shape {bias.shape} != ({cout},)")
    oh, ow = spec.output_hw(h, w)
    sh, sw, ph, pw = spec.stride_h, spec.stride_w, spec.pad_h, spec.pad_w
    og = cout // g
    xp = _pad(x.data, ph, pw)
    wd = weight.data
    depthwise = cg == 1 and og == 1
    axis = _separable_axis(spec) if depthwise else None

    if axis is not None:
        taps = wd.reshape(cout, -1)
        out = np.empty((n, cout, oh, ow), dtype=x.dtype)
        for c in range(cout):
            correlate1d(x.data[:, c], taps[c], axis=axis, output=out[:, c], mode="constant")
    elif depthwise:
        out = np.zeros((n, cout, oh, ow), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                out += _window(xp, i, j, oh, ow, sh, sw) * wd[:, 0, i, j][:, None, None]
    else:
        cols = _im2col(xp, kh, kw, oh, ow, sh, sw).reshape(n, g, cg * kh * kw, oh * ow)
        wmat = wd.reshape(g, og, cg * kh * kw)
        out = np.matmul(wmat, cols).reshape(n, cout, oh, ow)
    if bias is not None:
        out += bias.data[:, None, None]

    def backward_fn(gout: np.ndarray):
        gx = gw = gb = None
        if bias is not None and bias.requires_grad:
            gb = gout.sum(axis=(0, 2, 3))
        need_x, need_w = x.requires_grad, weight.requires_grad
        gxp = np.zeros_like(xp) if need_x and axis is None else None
        gwd = np.zeros_like(wd) if need_w and depthwise else None
        if depthwise:
            if need_w:
                patches = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
                gwd[:, 0] = np.einsum("nchwij,nchw->cij", patches, gout)
            if need_x and axis is not None:
                gx = np.empty_like(x.data)
                for c in range(cout):
                    convolve1d(gout[:, c], taps[c], axis=axis, output=gx[:, c], mode="constant")
            for i in range(kh):
                for j in range(kw):
                    if need_x and axis is None:
                        _window(gxp, i, j, oh, ow, sh, sw)[...] += gout * wd[:, 0, i, j][:, None, None]
        else:
            go = gout.reshape(n, g, og, oh * ow)
            if need_w:
                gwd = np.matmul(go, cols.transpose(0, 1, 3, 2)).sum(axis=0).reshape(wd.shape)
            if need_x:
                gcols = np.matmul(wmat.transpose(0, 2, 1), go).reshape(n, cin, kh, kw, oh, ow)
                for i in range(kh):
                    for j in range(kw):
                        _window(gxp, i, j, oh, ow, sh, sw)[...] += gcols[:, :, i, j]
        if gxp is not None:
            gx = gxp[:, :, ph : ph + h, pw : pw + w]
            if ph or pw:
                gx = np.ascontiguousarray(gx)
        if need_w:
            gw = gwd
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, backward_fn)


BN_MODES = ("train", "eval", "frozen")


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str = "train",
    eps: float = 1e-5,
    momentum: float = 0.1,
) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    ``train`` normalizes with batch statistics and updates the running buffers
    in place (unbiased variance, exponential average with ``momentum``).
    ``eval`` and ``frozen`` normalize with the running buffers; ``frozen`` also
    treats gamma/beta as constants while still passing gradients to ``x``.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if mode not in BN_MODES:
        raise ValueError(f"unknown batch_norm mode {mode!r}; expected one of {BN_MODES}")
    if x.ndim != 4:
        raise ValueError(f"batch_norm input must be 4-D, got shape {x.shape}")
    c = x.shape[1]
    for label, t in (("gamma", gamma.data), ("beta", beta.data), ("running_mean", running_mean), ("running_var", running_var)):
        if t.shape != (c,):
            raise ValueError(f"{label} shape {t.shape} does not match channel count {c}")
    xd = x.data
    dt = xd.dtype
    gd = gamma.data.astype(dt, copy=False)[:, None, None]
    bd = beta.data.astype(dt, copy=False)[:, None, None]

    if mode == "train":
        m = xd.shape[0] * xd.shape[2] * xd.shape[3]
        mean = xd.mean(axis=(0, 2, 3))
        xc = xd - mean[:, None, None]
        var = (xc * xc).mean(axis=(0, 2, 3))
        inv_std = (1.0 / np.sqrt(var + eps)).astype(dt)
        xhat = xc * inv_std[:, None, None]
        unbiased = var * (m / (m - 1)) if m > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean.astype(running_mean.dtype)
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased.astype(running_var.dtype)
        out = xhat * gd + bd

        def backward_fn(gout):
            ggamma = (gout * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
            gbeta = gout.sum(axis=(0, 2, 3)) if beta.requires_grad else None
            gx = None
            if x.requires_grad:
                gxhat = gout * gd
                mean_g = gxhat.mean(axis=(0, 2, 3))[:, None, None]
                mean_gx = (gxhat * xhat).mean(axis=(0, 2, 3))[:, None, None]
                gx = (gxhat - mean_g - xhat * mean_gx) * inv_std[:, None, None]
            return gx, ggamma, gbeta

        return make_result(out, (x, gamma, beta), backward_fn)

    inv_std = (1.0 / np.sqrt(running_var.astype(dt) + eps))[:, None, None]
    xhat = (xd - running_mean.astype(dt)[:, None, None]) * inv_std
    out = xhat * gd + bd
    if mode == "frozen":

        def frozen_backward(gout):
            return (gout * (gd * inv_std),)

        return make_result(out, (x,), frozen_backward)

    def eval_backward(gout):
        ggamma = (gout * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gbeta = gout.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        gx = gout * (gd * inv_std) if x.requires_grad else None
        return gx, ggamma, gbeta

    return make_result(out, (x, gamma, beta), eval_backward)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return make_result(out, (x,), lambda g: (g * (out > 0),))


def max_pool2d(x: Tensor, kernel: int = 3, stride: int = 2, padding: int = 1) -> Tensor:
    """Windowed maximum; ties resolve to the first element in row-major scan order."""
    if x.ndim != 4:
        raise ValueError(f"max_pool2d input must be 4-D, got shape {x.shape}")
    n, c, h, w = x.shape
    spec = ConvSpec(kernel, kernel, stride, stride, padding, padding)
    oh, ow = spec.output_hw(h, w)
    xp = _pad(x.data, padding, padding, value=-np.inf)
    best = _window(xp, 0, 0, oh, ow, stride, stride).copy()
    for i in range(kernel):
        for j in range(kernel):
            if i or j:
                np.maximum(best, _window(xp, i, j, oh, ow, stride, stride), out=best)

    def backward_fn(gout):
        gxp = np.zeros(xp.shape, dtype=gout.dtype)
        unclaimed = np.ones(best.shape, dtype=bool)
        for i in range(kernel):
            for j in range(kernel):
                hit = unclaimed & (_window(xp, i, j, oh, ow, stride, stride) == best)
                unclaimed &= ~hit
                _window(gxp, i, j, oh, ow, stride, stride)[...] += gout * hit
        return (np.ascontiguousarray(gxp[:, :, padding : padding + h, padding : padding + w]),)

    return make_result(best, (x,), backward_fn)


def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ValueError(f"global_avg_pool input must be 4-D, got shape {x.shape}")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def backward_fn(g):
        return (np.broadcast_to((g / (h * w))[:, :, None, None], x.shape).copy(),)

    return make_result(out, (x,), backward_fn)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor]) -> Tensor:
    """Affine map ``x @ weight.T + bias`` with weight shaped ``(Dout, Din)``."""
    if x.ndim != 2:
        raise ValueError(f"linear input must be 2-D (N, Din), got shape {x.shape}")
    if weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise ValueError(f"weight shape {weight.shape} incompatible with input Din={x.shape[1]}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ValueError(f"bias shape {bias.shape} != ({weight.shape[0]},)")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward_fn(g):
        gx = g @ weight.data if x.requires_grad else None
        gw = g.T @ x.data if weight.requires_grad else None
        gb = g.sum(axis=0) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, backward_fn)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    if logits.ndim != 2:
        raise ValueError(f"logits must be 2-D (N, K), got shape {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != n:
        raise ValueError(f"got {labels.shape[0]} labels for {n} logit rows")
    bad = (labels < 0) | (labels >= k)
    if bad.any():
        raise ValueError(f"label {int(labels[bad][0])} out of range [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = (logsumexp - z[rows, labels]).mean()

    def backward_fn(g):
        p = softmax(logits.data)
        p[rows, labels] -= 1.0
        return (p * (g / n),)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add needs identical shapes, got {a.shape} and {b.shape}")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul needs identical shapes, got {a.shape} and {b.shape}")
    return make_result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return make_result(np.asarray(x.data.sum(), dtype=x.dtype), (x,), lambda g: (np.full(x.shape, g, dtype=x.dtype),))
