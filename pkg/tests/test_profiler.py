import csv
import io
import struct
from pathlib import Path

import numpy as np
import pytest

from audio_inceptionnext.io import save_checkpoint
from audio_inceptionnext.model import ModelConfig, build_model
from audio_inceptionnext.profiler import count_macs, count_params, emit_table, profile

GOLDEN = Path(__file__).parent / "data" / "profile_default_416x128.csv"


@pytest.fixture(scope="module")
def default_model():
    return build_model(ModelConfig(num_classes=44))


def rows_by_name(report):
    return {r.name: r for r in report.rows}


def test_closed_form_layer_macs(default_model):
    rows = rows_by_name(profile(default_model, (1, 1, 416, 128)))
    assert rows["stem.conv"].macs == 5 * 7 * 64 * 208 * 64 == 29_818_880
    assert rows["stage4.block1.expand"].out_shape == (1, 2048, 13, 4)
    assert rows["stage4.block1.expand"].macs == 4 * 512 * 512 * 52 == 54_525_952
    assert rows["stage2.block1.branch11.dw_1xk"].macs == 128 * 11 * 52 * 16
    assert rows["head"].macs == 512 * 44


def test_default_totals(default_model):
    assert profile(default_model, (1, 1, 416, 128)).total_macs == 1_897_621_504
    assert count_macs(default_model, (1, 1, 512, 128)) == 2_335_528_960
    assert count_macs(build_model(ModelConfig(num_classes=309)), (1, 1, 512, 128)) == 2_335_664_640


def test_totals_are_column_sums(default_model):
    rep = profile(default_model, (2, 1, 416, 128))
    assert rep.total_params == sum(r.params for r in rep.rows) == count_params(default_model)
    assert rep.total_flops == 2 * rep.total_macs
    assert rep.gflops == pytest.approx(rep.total_macs / 1e9)
    assert all(r.macs == 0 for r in rep.rows if r.type in ("bn", "bn+relu", "relu", "add", "maxpool", "avgpool"))


@pytest.mark.parametrize("shape", [(416, 128), (512, 128), (96, 64)])
def test_macs_scaling(default_model, shape):
    h, w = shape
    one = count_macs(default_model, (1, 1, h, w))
    assert count_macs(default_model, (3, 1, h, w)) == 3 * one
    head = 512 * 44
    # every conv output extent doubles exactly when the input extents are multiples of 32
    assert count_macs(default_model, (1, 1, 2 * h, 2 * w)) - head == 4 * (one - head)


def test_invalid_shape_rejected(default_model):
    with pytest.raises(ValueError):
        count_macs(default_model, (1, 2, 416, 128))


def test_params_invariant_under_training_state(default_model):
    before = count_params(default_model)
    default_model.parameters()["head.weight"].data[...] += 1.0
    assert count_params(default_model) == before
    default_model.parameters()["head.weight"].data[...] -= 1.0


def walk_tensor_table(blob):
    """Independent decoder that only counts elements per tensor name."""
    pos = 5
    _, meta_len = struct.unpack_from("<HI", blob, pos)
    pos += 6 + meta_len
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    sizes = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", blob, pos)
        name = blob[pos + 2 : pos + 2 + n].decode()
        pos += 2 + n
        ndim = blob[pos]
        dims = struct.unpack_from(f"<{ndim}I", blob, pos + 1)
        pos += 1 + 4 * ndim
        size = int(np.prod(dims, dtype=np.int64))
        sizes[name] = size
        pos += 4 * size
    assert pos == len(blob)
    return sizes


def test_param_total_matches_checkpoint_walk(tmp_path):
    model = build_model(ModelConfig(stage_depths=(1, 2, 1, 1), num_classes=7))
    path = tmp_path / "m.ainx"
    save_checkpoint(path, model)
    sizes = walk_tensor_table(path.read_bytes())
    learnable = sum(s for n, s in sizes.items() if not n.endswith(("running_mean", "running_var")))
    assert learnable == count_params(model) == profile(model, (1, 1, 64, 64)).total_params
    assert sum(sizes.values()) == count_params(model, include_buffers=True)


def test_csv_layout(default_model):
    text = emit_table(profile(default_model, (1, 1, 416, 128)), "csv")
    table = list(csv.reader(io.StringIO(text)))
    assert table[0] == ["name", "type", "out_shape", "params", "macs"]
    assert table[-1][0] == "TOTAL"
    assert int(table[-1][3]) == sum(int(r[3]) for r in table[1:-1])
    assert int(table[-1][4]) == sum(int(r[4]) for r in table[1:-1])


def test_text_table_carries_convention(default_model):
    text = emit_table(profile(default_model, (1, 1, 416, 128)), "text")
    assert "macs_as_flops=True" in text.splitlines()[-1]
    assert "TOTAL" in text
    with pytest.raises(ValueError):
        emit_table(profile(default_model, (1, 1, 416, 128)), "xml")


def test_empty_report_has_header_and_totals():
    from audio_inceptionnext.profiler import ProfileReport

    lines = emit_table(ProfileReport(), "csv").splitlines()
    assert lines == ["name,type,out_shape,params,macs", "TOTAL,,,0,0"]


def test_golden_csv(default_model):
    text = emit_table(profile(default_model, (1, 1, 416, 128)), "csv")
    assert GOLDEN.read_bytes().decode() == text
