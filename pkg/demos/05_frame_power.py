"""
Frame power from switching activity
===================================

Generate counter activity, write and re-read it as VCD, then estimate
average power per frame at several frame widths.
"""

import time

from avgsca.framepower import CellEntry, CellLibrary, FramePlan, estimate_power, frame_energy_total
from avgsca.vcd import counter_log, parse_vcd, serialize_vcd

log = counter_log(n_counters=4, n_cycles=2000, width=8)
log = parse_vcd(serialize_vcd(log))
print(len(log), "events on", log.n_signals, "signals up to t =", log.end_time)

# Clock toggles cost more than counter bits
lib = CellLibrary({"top.clk": CellEntry(2.0, 1.0, 0.0)})

for n in (1, 10, 100):
    plan = FramePlan.covering(log, n)
    t0 = time.perf_counter()
    power = estimate_power(log, lib, plan)
    dt = time.perf_counter() - t0
    print(f"{n:4d} frames of {plan.frame_width:6d}: total energy {frame_energy_total(power, plan):.2f} in {dt * 1e3:.1f} ms")

print(estimate_power(log, lib, FramePlan.covering(log, 10)).round(3))
