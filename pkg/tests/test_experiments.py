import math

import numpy as np
import pytest

from avgsca import experiments
from avgsca.cpa import cpa_attack, success_rate
from avgsca.errors import ConfigError
from avgsca.experiments import (
    ExperimentSpec,
    ScanConfig,
    run_constructive,
    run_destructive,
    run_downsample_scan,
    run_sanr_sweep,
)
from avgsca.leakage import LeakageModel
from avgsca.synth import SynthConfig, compose_windows, sample_nonaveraged, synth_campaign
from avgsca.traceset import SamplingKind, TraceSet

FAST = SynthConfig(subsamples_per_cycle=10)


def test_noiseless_sweep_succeeds_everywhere():
    rows = run_sanr_sweep(ExperimentSpec(sanr_values=(math.inf,), n_repeats=2, synth=FAST))
    assert len(rows) == 8
    assert all(r.stats.success_rate == 1.0 and r.stats.mean_rank == 1.0 for r in rows)


def test_sweep_is_reproducible_and_thread_independent():
    spec = ExperimentSpec(sanr_values=(0.1,), n_repeats=4, synth=FAST, master_seed=11)
    a = run_sanr_sweep(spec)
    b = run_sanr_sweep(spec, workers=3)
    assert a == b
    c = run_sanr_sweep(ExperimentSpec(sanr_values=(0.1,), n_repeats=4, synth=FAST, master_seed=12))
    assert a != c


def test_tables_reproducible_and_consistent():
    spec = ExperimentSpec(n_repeats=6, synth=FAST, master_seed=2)
    t = run_destructive(spec, (0.0, 0.5))
    assert t.stats == run_destructive(spec, (0.0, 0.5), workers=4).stats
    sr = t.sr()
    assert sr.shape == (2, 4) and np.all((0 <= sr) & (sr <= 1))
    for row in t.stats:
        for s in row:
            assert s.success_rate == s.n_success / s.n_repeats
    # A full segment with no destructive cycles is the 16-cycle constructive case.
    c = run_constructive(spec, (16,))
    assert c.stats[0] == t.stats[0]


def test_repeat_order_does_not_matter(monkeypatch):
    spec = ExperimentSpec(n_repeats=5, synth=FAST, master_seed=3)
    forward = run_constructive(spec, (2, 8))

    def reversed_map(fn, items, workers):
        done = {i: fn(item) for i, item in reversed(list(enumerate(items)))}
        return [done[i] for i in range(len(items))]

    monkeypatch.setattr(experiments, "_map", reversed_map)
    assert run_constructive(spec, (2, 8)).stats == forward.stats


def test_invalid_settings():
    spec = ExperimentSpec(n_repeats=1, synth=FAST)
    with pytest.raises(ConfigError):
        run_constructive(spec, (17,))
    with pytest.raises(ConfigError):
        run_destructive(spec, (0.3,))
    with pytest.raises(ConfigError):
        run_destructive(spec, (1.5,))
    with pytest.raises(ConfigError):
        ExperimentSpec(n_traces=1)
    with pytest.raises(ConfigError):
        ExperimentSpec(n_repeats=0)


def test_full_segment_average_beats_single_snapshot():
    spec = ExperimentSpec(synth=FAST.replace(sanr=0.5))
    keys = spec.synth.key_schedule
    inputs = np.array(spec.inputs)
    avg_ranks, snap_ranks = [], []
    for rep in range(100):
        traces = synth_campaign(spec.synth, 21, spec.inputs, path=(rep,))
        avg = np.array([[compose_windows(t, 16, 0, 0)] for t in traces])
        snap = np.array([[sample_nonaveraged(t, 1)[0]] for t in traces])
        for col, out in ((avg, avg_ranks), (snap, snap_ranks)):
            ts = TraceSet(col, inputs, 1, SamplingKind.AVERAGED)
            out.append(cpa_attack(ts, LeakageModel.XOR_HW, true_key=keys[0]).correct_key_rank)
    assert success_rate(avg_ranks).success_rate >= success_rate(snap_ranks).success_rate


def test_downsample_scan_small():
    spec = ExperimentSpec(n_traces=400, model=LeakageModel.SBOX_HW, synth=SynthConfig(key_schedule=(0x2B,), n_key_bytes=1))
    res = run_downsample_scan(spec, (1, 3, 20), scan=ScanConfig(n_cycles=60))
    by_k = {r.k: r for r in res.rows}
    assert all(r.rank == 1 for r in res.rows)
    assert by_k[1].max_rho > 0.999 and by_k[3].max_rho > 0.999
    assert by_k[20].max_rho < by_k[1].max_rho
    lo, hi = res.refined[0]
    assert 3 <= lo < hi <= 8


def test_downsample_scan_with_noise_still_localizes():
    spec = ExperimentSpec(
        n_traces=1000,
        model=LeakageModel.SBOX_HW,
        synth=SynthConfig(key_schedule=(0x2B,), n_key_bytes=1, sanr=1.0),
    )
    res = run_downsample_scan(spec, (1, 10, 50))
    assert all(r.rank == 1 for r in res.rows)
    lo, hi = res.refined[0]
    assert 3 <= lo < hi <= 8
