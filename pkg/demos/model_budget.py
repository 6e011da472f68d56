"""
Where the parameters and multiply-adds go
=========================================

Per-stage breakdown of the default network, counted symbolically.
"""

from collections import defaultdict

from audio_inceptionnext.model import ModelConfig, build_model, stage_resolutions
from audio_inceptionnext.profiler import count_params, emit_table, profile

model = build_model(ModelConfig(num_classes=44))
report = profile(model, (1, 1, 416, 128))

print("params", count_params(model))
print("MACs  ", report.total_macs, f"({report.gflops:.3f} G under the MACs-as-FLOPs convention)")
print("FLOPs ", report.total_flops)

# Group rows by their top-level name.
params, macs = defaultdict(int), defaultdict(int)
for row in report.rows:
    key = row.name.split(".")[0]
    params[key] += row.params
    macs[key] += row.macs
for key in params:
    print(f"{key:8s} params {params[key]:>10,d}  MACs {macs[key]:>14,d}")

# Feature map sizes after each stage.
for name, h, w in stage_resolutions(model.config, 416, 128):
    print(f"{name:10s} {h:4d} x {w}")

# Within a block, the two 1x1 convolutions dominate the cost.
block = [r for r in report.rows if r.name.startswith("stage3.block1.") and r.macs]
for r in sorted(block, key=lambda r: -r.macs)[:4]:
    print(f"{r.name:36s} {r.macs:>12,d}")

# Swapping the head for 309 classes only adds a linear layer.
big = build_model(ModelConfig(num_classes=309))
print("309-class head adds", count_params(big) - count_params(model), "parameters")

# The first few lines of the full table.
print("\n".join(emit_table(report).splitlines()[:8]))
