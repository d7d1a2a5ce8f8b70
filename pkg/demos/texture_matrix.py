"""Walk through the texture/background matrix on one seed.

Renders each preset's training set, trains one SVM per category and scores
every row on the same real-domain holdout. Run with both feature backends to
see how much of the RR-RR vs W-UG gap depends on colour.

    python3 demos/texture_matrix.py [seed]
"""
import sys

from synthprobe.experiments import ExperimentConfig, make_context, run_texture_matrix

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

for backend in ("pixels", "gradhist"):
    cfg = ExperimentConfig.from_dict({"extractor": {"backend": backend}})
    result = run_texture_matrix(cfg, ctx=make_context(cfg, seed=seed))
    print(f"\n{backend} features, seed {seed}")
    cats = sorted(next(iter(result.rows.values())).ap)
    print("preset  " + " ".join(f"{c:>6}" for c in cats) + "    mAP")
    for name, report in result.rows.items():
        print(f"{name:7} " + " ".join(f"{report.ap[c]:6.3f}" for c in cats) + f"  {report.mAP:.3f}")
    print(f"gap RR-RR minus W-UG: {result.gap('RR-RR', 'W-UG'):+.3f}")
