"""
Success rate against noise level
================================

A reduced version of the SANR sweep: a few repeats per noise level,
averaged frames against two snapshots per cycle.
"""

from avgsca.experiments import ExperimentSpec, run_sanr_sweep
from avgsca.synth import SynthConfig

spec = ExperimentSpec(sanr_values=(10.0, 1.0, 0.1), n_repeats=10, synth=SynthConfig(subsamples_per_cycle=20))
rows = run_sanr_sweep(spec, workers=4)

for r in rows:
    print(f"sanr {r.sanr:5g} byte {r.byte + 1} {r.kind.name.lower():13s} sr {r.stats.success_rate:.2f} mean rank {r.stats.mean_rank:.1f}")
