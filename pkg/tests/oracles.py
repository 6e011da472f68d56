"""Slow, obviously-correct reference implementations used as test oracles."""

import itertools
import math

import numpy as np

from audio_inceptionnext.tensor import Tensor


def direct_conv2d(x, w, b, stride, pad, groups):
    """Nested-loop cross-correlation with zero padding."""
    n, cin, h, wd = x.shape
    cout, cg, kh, kw = w.shape
    sh, sw = stride
    ph, pw = pad
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (wd + 2 * pw - kw) // sw + 1
    og = cout // groups
    out = np.zeros((n, cout, oh, ow))
    for b_i in range(n):
        for co in range(cout):
            g = co // og
            for oy in range(oh):
                for ox in range(ow):
                    acc = 0.0 if b is None else float(b[co])
                    for ci in range(cg):
                        for ky in range(kh):
                            iy = oy * sh + ky - ph
                            if iy < 0 or iy >= h:
                                continue
                            for kx in range(kw):
                                ix = ox * sw + kx - pw
                                if 0 <= ix < wd:
                                    acc += float(x[b_i, g * cg + ci, iy, ix]) * float(w[co, ci, ky, kx])
                    out[b_i, co, oy, ox] = acc
    return out


def loop_matmul(x, w, b):
    n, din = x.shape
    dout = w.shape[0]
    out = np.zeros((n, dout))
    for i in range(n):
        for o in range(dout):
            s = float(b[o])
            for k in range(din):
                s += float(x[i, k]) * float(w[o, k])
            out[i, o] = s
    return out


def max_pool_windows(x, k, s, p):
    n, c, h, w = x.shape
    oh = (h + 2 * p - k) // s + 1
    ow = (w + 2 * p - k) // s + 1
    out = np.full((n, c, oh, ow), -np.inf)
    for b, ch, oy, ox in itertools.product(range(n), range(c), range(oh), range(ow)):
        for ky, kx in itertools.product(range(k), range(k)):
            iy, ix = oy * s + ky - p, ox * s + kx - p
            if 0 <= iy < h and 0 <= ix < w:
                out[b, ch, oy, ox] = max(out[b, ch, oy, ox], x[b, ch, iy, ix])
    return out


def pairwise_auc(scores, positives):
    """Exhaustive pair counting, ties worth one half."""
    pos = [s for s, p in zip(scores, positives) if p]
    neg = [s for s, p in zip(scores, positives) if not p]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else (0.5 if a == b else 0.0)
    return total / (len(pos) * len(neg))


def enumerated_ap(scores, positives):
    """AP by walking the ranking one item at a time."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits, total = 0, 0.0
    for rank, i in enumerate(order, 1):
        if positives[i]:
            hits += 1
            total += hits / rank
    return total / sum(bool(p) for p in positives)


def piecewise_warp(values, anchor, shift):
    """Resample rows so that source ``anchor`` lands on ``anchor + shift``, endpoints fixed.

    A destination on an endpoint would contradict the fixed endpoints, so it is
    pulled one row inward.
    """
    t = values.shape[0]
    dst = min(max(anchor + shift, 1), t - 2)
    out = np.empty_like(values, dtype=np.float64)
    for i in range(t):
        if i <= dst:
            src = i * anchor / dst if dst > 0 else 0.0
        else:
            src = anchor + (i - dst) * (t - 1 - anchor) / (t - 1 - dst)
        lo = int(math.floor(src))
        hi = min(lo + 1, t - 1)
        frac = src - lo
        out[i] = (1 - frac) * values[lo] + frac * values[hi]
    return out


def bind_params(module, tensors):
    """Swap a module's parameter Tensors for the given ones (same order as named_parameters)."""
    names = [n for n, _ in module.named_parameters()]
    for name, t in zip(names, tensors):
        *path, leaf = name.split(".")
        owner = module
        for part in path:
            owner = owner._children[part]
        owner._params[leaf] = t
        setattr(owner, leaf, t)
    return names


def weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    from audio_inceptionnext import ops

    return ops.sum(ops.mul(out, Tensor(weights.astype(out.dtype))))
