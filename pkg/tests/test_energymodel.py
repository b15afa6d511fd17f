import math
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from retention_lab.cachesim import SimStats
from retention_lab.energymodel import (TimingParams, compute_cycles, compute_energy, compute_latency,
                                       leakage_energy_nj, write_stall_cycles)
from retention_lab.profiles import (BASE_PROFILE, RETENTION_SET, SRAM_PROFILE, STT_10US, STT_1MS,
                                    STT_100US, RetentionProfile, profile_by_name)

T = TimingParams()


def test_million_instructions_take_half_a_millisecond():
    assert compute_latency(SimStats(instructions=1_000_000), BASE_PROFILE, T) == 500_000.0


def test_write_stall_cycles_per_profile():
    # ceil(write_latency * 2GHz) - 1 hit cycle
    assert write_stall_cycles(STT_1MS, T) == 3
    assert write_stall_cycles(STT_100US, T) == 2
    assert [write_stall_cycles(p, T) for p in RETENTION_SET[:4]] == [1, 1, 1, 1]
    assert write_stall_cycles(SRAM_PROFILE, T) == 0


def test_one_store_hit_on_1ms_profile():
    s = SimStats(instructions=1, l1_writes=1)
    assert compute_cycles(s, STT_1MS, T) == 1 + 3


def test_ten_misses_cost_two_hundred_cycles():
    base = compute_cycles(SimStats(instructions=100), STT_10US, T)
    assert compute_cycles(SimStats(instructions=100, l1_read_misses=10), STT_10US, T) - base == 200


def test_thousand_writes_on_10us():
    e = compute_energy(SimStats(l1_writes=1000), STT_10US, T, latency_ns=0.0)
    assert e.dynamic_write_nj == pytest.approx(26.0, rel=1e-12)


def test_stt_leakage_for_one_millisecond():
    assert leakage_energy_nj(STT_10US, 1e6) == pytest.approx(4659.0, rel=1e-12)
    e = compute_energy(SimStats(), STT_1MS, T, latency_ns=1e6)
    assert e.leakage_nj == pytest.approx(4659.0, rel=1e-12)


def test_sram_one_read_one_write():
    e = compute_energy(SimStats(l1_reads=1, l1_writes=1), SRAM_PROFILE, T, latency_ns=0.0)
    assert e.total_nj == pytest.approx(0.0142, rel=1e-12)


def test_leakage_ratio():
    ratio = leakage_energy_nj(SRAM_PROFILE, 1234.5) / leakage_energy_nj(STT_1MS, 1234.5)
    assert ratio == pytest.approx(34.265 / 4.659, rel=1e-12)
    assert ratio == pytest.approx(7.35, abs=0.01)


counters = st.fixed_dictionaries({
    "instructions": st.integers(1, 10**7), "l1_reads": st.integers(0, 10**6),
    "l1_writes": st.integers(0, 10**6), "l1_read_misses": st.integers(0, 10**5),
    "l1_write_misses": st.integers(0, 10**5), "l2_accesses": st.integers(0, 10**5),
    "l2_misses": st.integers(0, 10**5), "expiry_writebacks": st.integers(0, 10**4)})


@given(counters, st.sampled_from(RETENTION_SET + (SRAM_PROFILE,)))
def test_total_is_sum_of_components(c, profile):
    e = compute_energy(SimStats(**c), profile, T)
    assert e.total_nj == e.dynamic_read_nj + e.dynamic_write_nj + e.leakage_nj + e.l2_charge_nj
    assert e.latency_ns == compute_latency(SimStats(**c), profile, T)


@given(counters, st.sampled_from(RETENTION_SET))
def test_latency_is_affine_in_each_counter(c, profile):
    coeff = {"instructions": T.base_cpi, "l1_read_misses": T.l2_hit_penalty_cycles,
             "l1_write_misses": T.l2_hit_penalty_cycles, "l2_misses": T.memory_penalty_cycles,
             "l1_writes": write_stall_cycles(profile, T), "l1_reads": 0, "l2_accesses": 0,
             "expiry_writebacks": 0}
    s = SimStats(**c)
    base = compute_cycles(s, profile, T)
    for name, k in coeff.items():
        bumped = replace(s, **{name: getattr(s, name) + 1})
        assert compute_cycles(bumped, profile, T) - base == k


def test_l2_charge_counts_each_access_once():
    s = SimStats(l2_accesses=10, expiry_writebacks=4)
    assert compute_energy(s, STT_10US, T, 0.0).l2_charge_nj == pytest.approx(10 * 0.05)


def test_fills_charged_as_writes():
    s = SimStats(l1_reads=10, l1_read_misses=3)
    e = compute_energy(s, STT_10US, T, 0.0)
    assert e.dynamic_write_nj == pytest.approx(3 * 0.026)
    assert e.dynamic_read_nj == pytest.approx(10 * 0.003)


def test_parameter_validation():
    with pytest.raises(ValueError):
        TimingParams(frequency_hz=0)
    with pytest.raises(ValueError):
        TimingParams(l2_hit_penalty_cycles=-1)
    with pytest.raises(ValueError):
        RetentionProfile("x", 1.0, 0.0, 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        RetentionProfile("x", 0.0, 1.0, 1.0, 1.0, 1.0, 1.0)


def test_physical_validation():
    bogus = RetentionProfile("stt-inf", math.inf, 0.4, 1.6, 0.003, 0.05, 4.659)
    with pytest.raises(ValueError, match="infinite"):
        bogus.validate_physical()
    SRAM_PROFILE.validate_physical()
    for p in RETENTION_SET:
        p.validate_physical()


def test_profile_lookup():
    assert profile_by_name("26.5us").retention_time_ns == 26_500.0
    with pytest.raises(KeyError, match="unknown"):
        profile_by_name("2ms")


def test_table_values():
    assert [p.retention_time_ns for p in RETENTION_SET] == [1e4, 2.65e4, 5e4, 7.5e4, 1e5, 1e6]
    assert [p.write_energy_nj for p in RETENTION_SET] == [0.026, 0.030, 0.033, 0.035, 0.036, 0.051]
    assert [p.write_latency_ns for p in RETENTION_SET] == [0.601, 0.769, 0.894, 0.981, 1.045, 1.647]
    assert {p.read_energy_nj for p in RETENTION_SET} == {0.003}
    assert {p.leakage_mw for p in RETENTION_SET} == {4.659}
