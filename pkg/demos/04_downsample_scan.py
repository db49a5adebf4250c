"""
Finding the leaky cycles by downsampling
========================================

Attack a long trace at coarse resolution first, then zoom in on the
frames that still correlate.
"""

from avgsca.experiments import ExperimentSpec, ScanConfig, run_downsample_scan
from avgsca.leakage import LeakageModel
from avgsca.synth import SynthConfig

spec = ExperimentSpec(n_traces=500, model=LeakageModel.SBOX_HW, synth=SynthConfig(key_schedule=(0x2B,), n_key_bytes=1))
res = run_downsample_scan(spec, (1, 3, 10, 50), scan=ScanConfig(n_cycles=100))

for r in res.rows:
    print(f"k={r.k:3d} key 0x{r.recovered_key:02x} rank {r.rank} max|rho| {r.max_rho:.3f} best cycle {r.best_cycle}")
print("true leaky cycles", res.leaky_cycles, "refined", res.refined[0])
