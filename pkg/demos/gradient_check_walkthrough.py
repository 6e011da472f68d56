"""
Checking backprop against finite differences
============================================

Central differences in float64 against the reverse-mode gradients of a
depthwise convolution and of one full multi-scale block.
"""

import numpy as np

from audio_inceptionnext import ops
from audio_inceptionnext.gradcheck import grad_check
from audio_inceptionnext.model import InceptionNeXtBlock
from audio_inceptionnext.ops import ConvSpec
from audio_inceptionnext.tensor import Tensor

rng = np.random.default_rng(0)

# A 1 x 11 depthwise kernel, the horizontal half of one branch.
spec = ConvSpec(1, 11, 1, 1, 0, 5, groups=3)
x = rng.standard_normal((2, 3, 6, 14))
w = rng.standard_normal((3, 1, 1, 11))
weights = rng.standard_normal((2, 3, 6, 14))


def depthwise_loss(x, w):
    return ops.sum(ops.mul(ops.conv2d(x, w, None, spec), Tensor(weights)))


print("depthwise conv max relative error:", grad_check(depthwise_loss, [x, w], rng=rng))

# One block in eval mode, gradient with respect to its input only.
block = InceptionNeXtBlock(4, expansion=2)
block.bn_out.gamma.data[...] = 1.0  # gamma starts at zero, which would hide the residual branch
inp = rng.standard_normal((1, 4, 7, 7))
r = rng.standard_normal(inp.shape)


def block_loss(inp):
    return ops.sum(ops.mul(block(inp, False), Tensor(r)))


print("block input max relative error:", grad_check(block_loss, [inp], rng=rng))

