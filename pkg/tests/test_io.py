import io
import struct
from fractions import Fraction

import numpy as np
import pytest

from avgsca.errors import ConfigError, TraceFormatError
from avgsca.experiments import ExperimentKind
from avgsca.io import (
    HEADER,
    decode_traces,
    encode_traces,
    parse_run_config,
    read_traces,
    write_csv,
    write_traces,
)
from avgsca.leakage import LeakageModel
from avgsca.traceset import SamplingKind, TraceSet


def sample_set(n=5, t=7, seg=True, width=Fraction(1, 3)):
    rng = np.random.default_rng(n * 100 + t)
    samples = rng.normal(size=(n, t))
    samples[0, 0] = np.nextafter(0.0, 1.0)
    samples[-1, -1] = -0.0
    return TraceSet(
        samples,
        rng.integers(0, 256, n),
        width,
        SamplingKind.NON_AVERAGED,
        np.arange(t) // 3 if seg else None,
    )


@pytest.mark.parametrize("seg", [True, False])
@pytest.mark.parametrize("width", [Fraction(1, 3), Fraction(1, 2), 3, 0.1])
def test_roundtrip_bit_exact(tmp_path, seg, width):
    ts = sample_set(seg=seg, width=width)
    path = tmp_path / "t.asca"
    write_traces(ts, path)
    back = read_traces(path)
    assert back == ts
    assert back.samples.tobytes() == ts.samples.tobytes()


def test_header_layout():
    data = encode_traces(sample_set(seg=False))
    magic, version, n, t, width, kind = HEADER.unpack_from(data)
    assert (magic, version, n, t, kind) == (b"ASCA", 1, 5, 7, 0)
    assert len(data) == HEADER.size + 5 + 8 * 35
    assert struct.unpack_from("<d", data, HEADER.size + 5)[0] == np.nextafter(0.0, 1.0)


def test_empty_set_rejected():
    empty = TraceSet(np.zeros((0, 3)), np.zeros(0), 1, SamplingKind.AVERAGED)
    with pytest.raises(TraceFormatError):
        encode_traces(empty)


def corrupt(data, offset, raw):
    return data[:offset] + raw + data[offset + len(raw):]


def test_malformed_files():
    good = encode_traces(sample_set(seg=False))
    cases = {
        "bad magic": (corrupt(good, 0, b"ASCB"), 0),
        "unsupported version": (corrupt(good, 4, struct.pack("<H", 9)), 4),
        "zero traces": (corrupt(good, 6, struct.pack("<I", 0)), 6),
        "sampling kind": (corrupt(good, 22, b"\x07"), 22),
        "frame width": (corrupt(good, 14, struct.pack("<d", -1.0)), 14),
        "header needs": (good[:10], 10),
    }
    for fragment, (data, offset) in cases.items():
        with pytest.raises(TraceFormatError) as info:
            decode_traces(data)
        assert fragment in str(info.value)
        assert info.value.offset == offset


def test_truncated_file_reports_sizes():
    good = encode_traces(sample_set(seg=False))
    with pytest.raises(TraceFormatError) as info:
        decode_traces(good[:-3])
    msg = str(info.value)
    assert f"expected {len(good)} bytes" in msg and f"file has {len(good) - 3}" in msg
    with pytest.raises(TraceFormatError, match="expected"):
        decode_traces(good + b"\0")


def test_csv_format():
    buf = io.StringIO()
    write_csv(buf, ["a", "b"], [[1, 0.5], ["x,y", 2]])
    assert buf.getvalue() == 'a,b\n1,0.5\n"x,y",2\n'


def test_run_config():
    cfg = parse_run_config(
        """
        # comment
        experiment = destructive
        n_repeats = 12
        master_seed = 0x10
        sanr_values = 1, 0.5
        model = sbox-hw
        key_schedule = 0x01, 0x02
        n_key_bytes = 2
        cycles_per_key_byte = 8
        alpha = 2.5
        output_dir = out
        format = binary
        """
    )
    assert cfg.spec.experiment is ExperimentKind.DESTRUCTIVE
    assert cfg.spec.n_repeats == 12 and cfg.spec.master_seed == 16
    assert cfg.spec.sanr_values == (1.0, 0.5)
    assert cfg.spec.model is LeakageModel.SBOX_HW and cfg.spec.synth.model is LeakageModel.SBOX_HW
    assert cfg.spec.synth.key_schedule == (1, 2) and cfg.spec.synth.alpha == 2.5
    assert str(cfg.output_dir) == "out" and cfg.fmt == "binary"


@pytest.mark.parametrize(
    "text",
    [
        "bogus = 1",
        "n_repeats = many",
        "n_repeats = 0",
        "model = dpa",
        "key_schedule = 1, 2",
        "format = xml",
        "experiment = nope",
        "sanr_values = 1, -1",
    ],
)
def test_run_config_errors(text):
    with pytest.raises(ConfigError):
        parse_run_config(text)
