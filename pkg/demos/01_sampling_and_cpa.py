"""
Averaged versus snapshot sampling
=================================

Build a small campaign of noisy sawtooth traces, sample it two ways and
attack the first key byte with correlation power analysis.
"""

import numpy as np

from avgsca.cpa import cpa_attack
from avgsca.leakage import LeakageModel
from avgsca.synth import SynthConfig, averaged_traceset, nonaveraged_traceset, synth_campaign

# One trace per input byte, noise at signal-to-noise ratio 0.5
cfg = SynthConfig(sanr=0.5, subsamples_per_cycle=20)
traces = synth_campaign(cfg, master_seed=1)
print(len(traces), "traces of", len(traces[0].values), "sub-samples")

# A frame of 16 cycles covers one whole key-byte segment
avg = averaged_traceset(traces, frame_width_cycles=16)
snap = nonaveraged_traceset(traces, samples_per_cycle=1)
print("averaged samples:", avg.samples.shape, "snapshots:", snap.samples.shape)

key = cfg.key_schedule[0]
for name, ts in (("averaged", avg), ("snapshot", snap)):
    res = cpa_attack(ts, LeakageModel.XOR_HW, byte_window=ts.window_of_segment(0), true_key=key)
    print(f"{name:9s} recovered 0x{res.recovered_key:02x} rank {res.correct_key_rank} max|rho| {res.max_abs_rho:.3f}")

# Correlation of the right key across the segment's snapshots
res = cpa_attack(snap, LeakageModel.XOR_HW, byte_window=snap.window_of_segment(0), true_key=key)
print(np.round(res.rho[key], 2))
