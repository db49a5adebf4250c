"""
Trace files and the command line
================================

Save a trace set, read it back bit for bit, then drive the same steps
through the ``avgsca`` command.
"""

import subprocess
import sys
import tempfile
from pathlib import Path

from avgsca.io import read_traces, write_traces
from avgsca.synth import SynthConfig, averaged_traceset, synth_campaign

ts = averaged_traceset(synth_campaign(SynthConfig(subsamples_per_cycle=10, sanr=1.0), 3), 2)
tmp = Path(tempfile.mkdtemp())
write_traces(ts, tmp / "avg.asca")
back = read_traces(tmp / "avg.asca")
print("round trip equal:", back == ts, back.samples.shape, back.frame_width_cycles, flush=True)

cli = [sys.executable, "-m", "avgsca.cli"]
subprocess.run(cli + ["synth", "--seed", "3", "--model", "sbox-hw", "-o", str(tmp / "t.asca")], check=True)
subprocess.run(cli + ["cpa", "--model", "sbox-hw", "--true-key", "0x2b", "--byte", "0", str(tmp / "t.asca")], check=True)
subprocess.run(cli + ["gen-vcd", "--counters", "2", "--cycles", "100", "-o", str(tmp / "c.vcd")], check=True)
subprocess.run(cli + ["power-est", "--frames", "4", str(tmp / "c.vcd")], check=True)
