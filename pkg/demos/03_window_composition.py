"""
Constructive and destructive cycles in one frame
================================================

Longer frames over leaky cycles help. Mixing in cycles from the next key
byte hurts.
"""

from avgsca.experiments import ExperimentSpec, run_constructive, run_destructive
from avgsca.synth import SynthConfig

spec = ExperimentSpec(n_repeats=20, synth=SynthConfig(subsamples_per_cycle=20))

table = run_constructive(spec, (2, 4, 8, 16), workers=4)
print(table.row_label, table.sr().round(2), sep="\n")

table = run_destructive(spec, (0.0, 0.5, 1.0), workers=4)
print(table.row_label, table.sr().round(2), sep="\n")
