import io
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from retention_lab.trace import (AccessEvent, AccessKind, EmptyWorkloadError, PhaseTrace,
                                 SyntheticParams, TraceParseError, Workload, generate_periodic,
                                 generate_synthetic, interleave, load_trace, parse_trace,
                                 save_trace, serialize_trace)

from conftest import quiet


def test_empty_input_has_no_phases():
    with pytest.raises(EmptyWorkloadError, match="no phases"):
        parse_trace(b"")


def test_single_event():
    w = parse_trace("#phase p0 1.0\n5 R 0x1000\n")
    assert len(w.phases) == 1
    (ev,) = list(w.phases[0].events())
    assert ev == AccessEvent(5, AccessKind.READ, 0x1000, 0)


def test_bad_kind_names_the_field_and_line():
    with pytest.raises(TraceParseError, match="kind") as exc:
        parse_trace("#phase p0 1.0\n1 W 0x40\n5 X 0x1000\n")
    assert exc.value.line_number == 3


@pytest.mark.parametrize("line, needle", [
    ("-1 R 0x10", "instr_gap"),
    ("1 R 1000", "0x"),
    ("1 R 0xzz", "hex"),
    ("1 R", "expected"),
])
def test_malformed_event_lines(line, needle):
    with pytest.raises(TraceParseError, match=needle):
        parse_trace(f"#phase p0 1\n{line}\n")


def test_event_before_phase_rejected():
    with pytest.raises(TraceParseError, match="before any"):
        parse_trace("3 R 0x10\n")


def test_comments_and_workload_name():
    w = parse_trace("#workload demo\n# a note\n#phase a 1\n1 W 0x40  # inline\n#tail 7\n")
    assert w.name == "demo"
    assert w.phases[0].trailing_instructions == 7
    assert w.instruction_count == 2 + 7


def test_weights_normalized_with_warning():
    with pytest.warns(UserWarning, match="normaliz"):
        w = parse_trace("#phase a 2\n1 R 0x0\n#phase b 6\n1 R 0x40\n")
    assert [p.weight for p in w.phases] == [0.25, 0.75]


def test_zero_weights_rejected():
    with pytest.raises(ValueError, match="zero"):
        parse_trace("#phase a 0\n1 R 0x0\n")


def test_instruction_count_counts_each_reference():
    p = PhaseTrace("p", 1.0, [0, 3, 0], [0, 1, 0], [0, 64, 128], trailing_instructions=4)
    assert p.instruction_count == 3 + 3 + 4
    assert p.instruction_count >= len(p)


events_st = st.lists(st.tuples(st.integers(0, 50), st.sampled_from([0, 1]),
                               st.integers(0, 2**64 - 1), st.integers(0, 3)), min_size=1, max_size=40)


@given(st.lists(events_st, min_size=1, max_size=3), st.integers(0, 9))
def test_roundtrip(phase_events, tail):
    phases = []
    for i, evs in enumerate(phase_events):
        g, k, a, c = zip(*evs)
        phases.append(PhaseTrace(f"p{i}", 1.0 / len(phase_events), g, k, a, c, tail))
    total = sum(p.weight for p in phases)
    for p in phases:
        p.weight = p.weight / total
    w = Workload("rt", phases)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        back = parse_trace(serialize_trace(w), name="ignored")
    assert back == w


def test_file_roundtrip(tmp_path):
    w = quiet(generate_synthetic, SyntheticParams(32, 0.3, 2000.0, 0.1, 500, 3.0, seed=4))
    path = tmp_path / "x.trace"
    save_trace(w, path)
    assert load_trace(path) == w
    assert parse_trace(io.BytesIO(path.read_bytes())) == w


# -- synthetic generation ---------------------------------------------------------

def test_generator_deterministic():
    p = SyntheticParams(64, 0.4, 5000.0, 0.05, 5000, 4.0, seed=99)
    a, b = quiet(generate_synthetic, p), quiet(generate_synthetic, p)
    assert serialize_trace(a) == serialize_trace(b)


def test_generator_no_writes():
    w = generate_synthetic(SyntheticParams(64, 0.0, 5000.0, 0.0, 4000, 4.0, seed=1))
    assert int(w.phases[0].kinds.sum()) == 0


def test_generator_working_set_bound():
    w = quiet(generate_synthetic, SyntheticParams(64, 0.3, 1000.0, 0.0, 20000, 4.0, seed=2))
    assert len(np.unique(w.phases[0].addresses)) <= 64


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_generator_write_fraction(seed):
    p = SyntheticParams(400, 0.35, 20_000.0, 0.02, 20_000, 4.0, seed=seed)
    w = quiet(generate_synthetic, p)
    ph = w.phases[0]
    assert len(ph) == p.event_count
    assert abs(ph.kinds.mean() - p.write_fraction) <= 0.05
    n_stream = round(p.event_count * p.streaming_fraction)
    assert len(np.unique(ph.addresses)) <= p.working_set_lines + n_stream


@pytest.mark.parametrize("seed", [3, 4])
def test_generator_write_gap_mean(seed):
    p = SyntheticParams(300, 0.02, 30_000.0, 0.01, 200_000, 4.0, seed=seed)
    ph = generate_synthetic(p).phases[0]
    pos = np.cumsum(ph.gaps + 1)
    w = ph.kinds == 1
    lines, t = ph.addresses[w], pos[w]
    order = np.lexsort((t, lines))
    lines, t = lines[order], t[order]
    same = lines[1:] == lines[:-1]
    gaps = (t[1:] - t[:-1])[same]
    target = p.reuse_gap_mean_ns * p.instr_per_ns
    assert abs(gaps.mean() / target - 1.0) < 0.10


def test_generator_warns_when_gap_unreachable():
    with pytest.warns(UserWarning, match="cannot sustain"):
        generate_synthetic(SyntheticParams(16, 0.5, 1e6, 0.0, 10_000, 2.0, seed=0))


def test_params_validation():
    with pytest.raises(ValueError):
        SyntheticParams(0, 0.1, 10.0, 0.0, 10, 2.0, seed=0)
    with pytest.raises(ValueError):
        SyntheticParams(10, 1.5, 10.0, 0.0, 10, 2.0, seed=0)


def test_periodic_generator_has_fixed_write_period():
    w = generate_periodic(8, 30_000.0, 300_000.0)
    ph = w.phases[0]
    pos = np.cumsum(ph.gaps + 1)
    first = ph.addresses[0]
    t = pos[(ph.addresses == first) & (ph.kinds == 1)]
    assert np.all(np.abs(np.diff(t) - 60_000) <= 2)


# -- interleave -----------------------------------------------------------------------

def test_interleave_identity():
    w = quiet(generate_synthetic, SyntheticParams(16, 0.3, 1000.0, 0.0, 50, 2.0, seed=5))
    out = interleave([w])
    assert out == w
    assert out.phases[0].cores.max() == 0


def test_interleave_two_single_events():
    a = Workload("a", [PhaseTrace("p", 1.0, [1], [0], [0])])
    b = Workload("b", [PhaseTrace("p", 1.0, [2], [1], [64])])
    ph = interleave([a, b]).phases[0]
    assert ph.cores.tolist() == [0, 1]
    assert ph.gaps.tolist() == [1, 2]


@given(st.lists(st.integers(1, 30), min_size=1, max_size=8), st.integers(0, 1000))
def test_interleave_projection(lengths, seed):
    r = np.random.default_rng(seed)
    ws = [Workload(f"w{i}", [PhaseTrace("p", 1.0, r.integers(0, 5, n), r.integers(0, 2, n),
                                        r.integers(0, 2**20, n).astype(np.uint64))])
          for i, n in enumerate(lengths)]
    mix = interleave(ws).phases[0]
    for i, w in enumerate(ws):
        proj = mix.core_projection(i)
        src = w.phases[0]
        assert np.array_equal(proj.gaps, src.gaps)
        assert np.array_equal(proj.kinds, src.kinds)
        assert np.array_equal(proj.addresses, src.addresses)
    # round robin: event j of every core precedes event j+1 of any core
    rank = np.zeros(len(mix), dtype=int)
    seen = {}
    for idx, c in enumerate(mix.cores.tolist()):
        rank[idx] = seen.get(c, 0)
        seen[c] = rank[idx] + 1
    assert np.all(np.diff(rank) >= 0)


def test_interleave_four_copies():
    w = quiet(generate_synthetic, SyntheticParams(16, 0.3, 1000.0, 0.0, 40, 2.0, seed=6))
    mix = interleave([w] * 4).phases[0]
    for c in range(4):
        assert np.array_equal(mix.core_projection(c).addresses, w.phases[0].addresses)


def test_interleave_errors():
    with pytest.raises(ValueError):
        interleave([])
    one = Workload("a", [PhaseTrace("p", 1.0, [1], [0], [0])])
    with pytest.raises(ValueError):
        interleave([one] * 9)
