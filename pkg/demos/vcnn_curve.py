"""Virtual training plus k real images per category, with and without the adapter.

Prints both series and writes curve.svg into the working directory.

    python3 demos/vcnn_curve.py [seed]
"""
import sys

from synthprobe.experiments import ExperimentConfig, make_context, real_pool, run_vcnn
from synthprobe.experiments.plot import plot_curve

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = ExperimentConfig()
ctx = make_context(cfg, seed=seed)
pool = real_pool(ctx.world, cfg, seed)
n, ks = cfg.experiment.vcnn_virtual_n, cfg.experiment.real_ks

series = {}
for adapter in (False, True):
    label = "adapter on" if adapter else "adapter off"
    rows = run_vcnn(n, ks, adapter, cfg, ctx=ctx, pool=pool)
    series[label] = [(k, r.mAP) for k, r in rows]
    print(label + ": " + ", ".join(f"k={k} {m:.3f}" for k, m in series[label]))

plot_curve(series, "curve.svg")
print("wrote curve.svg")
