import numpy as np
import pytest

import gradcases


@pytest.mark.parametrize("case", sorted(gradcases.LAYER_CASES))
def test_layer_gradients_over_seeds(case):
    fn = gradcases.LAYER_CASES[case]
    worst = max(fn(np.random.default_rng(seed)) for seed in range(20))
    assert worst < 1e-3


@pytest.mark.parametrize("training", [True, False])
def test_block_gradients_every_coordinate(training):
    assert gradcases.block(np.random.default_rng(7), training=training, max_coords=None) < 1e-3


def test_relu_margin_spy_restores_op():
    from audio_inceptionnext import ops

    before = ops.relu
    from audio_inceptionnext.tensor import Tensor

    m = gradcases.relu_margin(lambda: ops.relu(Tensor(np.array([-0.5, 0.25]))))
    assert m == 0.25 and ops.relu is before
