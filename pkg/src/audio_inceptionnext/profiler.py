"""Symbolic parameter and multiply-accumulate accounting per layer."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import List, Tuple

from .model import (
    AudioInceptionNeXt,
    BatchNorm2d,
    Conv2d,
    InceptionNeXtBlock,
    Linear,
    Module,
    check_input_shape,
)

COLUMNS = ("name", "type", "out_shape", "params", "macs")


@dataclass
class LayerRow:
    name: str
    type: str
    out_shape: Tuple[int, ...]
    params: int
    macs: int
    elementwise: int = 0


@dataclass
class ProfileReport:
    rows: List[LayerRow] = field(default_factory=list)
    input_shape: Tuple[int, ...] = ()
    macs_as_flops: bool = True
    count_bn: bool = True

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    @property
    def total_flops(self) -> int:
        """2 * MACs (one multiply plus one add each)."""
        return 2 * self.total_macs

    @property
    def total_elementwise(self) -> int:
        return sum(r.elementwise for r in self.rows)

    @property
    def gflops(self) -> float:
        """Headline GFLOPs under the report's convention."""
        return (self.total_macs if self.macs_as_flops else self.total_flops) / 1e9


def _own_params(mod: Module) -> int:
    return sum(p.size for p in mod._params.values())


class _Walker:
    def __init__(self, report: ProfileReport):
        self.report = report

    def conv(self, name: str, mod: Conv2d, shape):
        n, c, h, w = shape
        oh, ow = mod.spec.output_hw(h, w)
        out = (n, mod.out_channels, oh, ow)
        per_out = (mod.in_channels // mod.spec.groups) * mod.spec.kernel_h * mod.spec.kernel_w
        kind = "dwconv" if mod.spec.groups > 1 and mod.spec.groups == mod.in_channels else "conv"
        self.report.rows.append(LayerRow(name, kind, out, _own_params(mod), per_out * mod.out_channels * oh * ow * n))
        return out

    def elementwise(self, name: str, kind: str, mod, shape):
        n, c, h, w = shape
        params = _own_params(mod) if (mod is not None and self.report.count_bn) else 0
        self.report.rows.append(LayerRow(name, kind, tuple(shape), params, 0, n * c * h * w))
        return shape

    def block(self, name: str, blk: InceptionNeXtBlock, shape):
        for br in blk.branches:
            prefix = f"{name}.branch{br.kernel}"
            s = self.conv(prefix + ".dw_1xk", br.dw_1xk, shape)
            s = self.elementwise(prefix + ".bn_1xk", "bn+relu", br.bn_1xk, s)
            s = self.conv(prefix + ".dw_kx1", br.dw_kx1, s)
            self.elementwise(prefix + ".bn_kx1", "bn+relu", br.bn_kx1, s)
        self.elementwise(name + ".branch_sum", "add", None, shape)
        s = self.conv(name + ".expand", blk.expand, shape)
        self.elementwise(name + ".expand_relu", "relu", None, s)
        s = self.conv(name + ".squeeze", blk.squeeze, s)
        s = self.elementwise(name + ".bn_out", "bn", blk.bn_out, s)
        return self.elementwise(name + ".residual", "add", None, s)


def profile(model: AudioInceptionNeXt, input_shape: Tuple[int, int, int, int], macs_as_flops: bool = True) -> ProfileReport:
    """Walk the model symbolically at ``input_shape = (N, C, T, F)``; nothing is executed.

    Conv MACs are ``N * Cout * (Cin / groups) * kh * kw * H' * W'``; the head is
    ``N * Dout * Din``. BN, ReLU, pooling and additions go to the elementwise
    column and are excluded from MACs. BN scale/shift parameters are listed on
    their own rows so the params column sums to the model's total.
    """
    check_input_shape(model.config, tuple(input_shape))
    report = ProfileReport(input_shape=tuple(input_shape), macs_as_flops=macs_as_flops)
    walk = _Walker(report)
    s = walk.conv("stem.conv", model.stem.conv, input_shape)
    s = walk.elementwise("stem.bn", "bn+relu", model.stem.bn, s)
    n, c, h, w = s
    s = (n, c, (h - 1) // 2 + 1, (w - 1) // 2 + 1)
    walk.elementwise("stem.pool", "maxpool", None, s)
    for i, stage in enumerate(model.stages):
        if stage.downsample is not None:
            s = walk.conv(f"stage{i + 1}.downsample", stage.downsample, s)
            s = walk.elementwise(f"stage{i + 1}.downsample_bn", "bn", stage.downsample_bn, s)
        for j, blk in enumerate(stage.blocks):
            s = walk.block(f"stage{i + 1}.block{j + 1}", blk, s)
    n, c = s[0], s[1]
    walk.elementwise("pool", "avgpool", None, s)
    head: Linear = model.head
    report.rows.append(LayerRow("head", "linear", (n, head.out_features), _own_params(head), n * head.in_features * head.out_features))
    return report


def count_params(model: Module, include_buffers: bool = False) -> int:
    """Element count of all learnable tensors (running BN statistics only with ``include_buffers``)."""
    total = sum(p.size for _, p in model.named_parameters())
    if include_buffers:
        total += sum(b.size for _, b in model.named_buffers())
    return total


def count_macs(model: AudioInceptionNeXt, input_shape: Tuple[int, int, int, int]) -> int:
    return profile(model, input_shape).total_macs


def emit_table(report: ProfileReport, fmt: str = "text") -> str:
    """Render ``report`` as an aligned text table or RFC 4180 CSV; the totals row comes last."""
    rows = [(r.name, r.type, "x".join(map(str, r.out_shape)), str(r.params), str(r.macs)) for r in report.rows]
    totals = ("TOTAL", "", "", str(report.total_params), str(report.total_macs))
    convention = (
        f"convention: macs_as_flops={report.macs_as_flops} count_bn={report.count_bn} "
        f"input={'x'.join(map(str, report.input_shape))} params={report.total_params} "
        f"macs={report.total_macs} flops={report.total_flops} gflops={report.gflops:.3f}"
    )
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(COLUMNS)
        writer.writerows(rows)
        writer.writerow(totals)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown table format {fmt!r}; expected 'text' or 'csv'")
    table = [COLUMNS] + rows + [totals]
    widths = [max(len(row[i]) for row in table) for i in range(len(COLUMNS))]
    lines = ["  ".join(cell.ljust(widths[i]) if i < 3 else cell.rjust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in table]
    lines.insert(1, "  ".join("-" * wd for wd in widths))
    lines.insert(len(lines) - 1, "  ".join("-" * wd for wd in widths))
    return "\n".join(lines + [convention]) + "\n"
