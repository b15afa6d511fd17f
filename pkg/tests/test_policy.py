import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from retention_lab.cachesim import CacheGeometry, simulate
from retention_lab.corpus import CorpusSpec, standard_corpus
from retention_lab.energymodel import compute_energy, leakage_energy_nj
from retention_lab.features import CatalogMismatchError, FeatureCatalog
from retention_lab.learn import ConstantModel, train
from retention_lab.policy import (PhaseOutcome, PolicyConfig, PolicyError, PolicyResult,
                                  build_dataset, dataset_from_csv, dataset_to_csv,
                                  geomean_savings, label_exhaustive, rows_to_dataset,
                                  run_exhaustive, run_lars_sampling, run_multiprogrammed,
                                  run_policy, run_scart, run_static, savings_report,
                                  span_objective)
from retention_lab.profiles import BASE_PROFILE, RETENTION_SET, STT_10US, RetentionProfile
from retention_lab.trace import (PhaseTrace, SyntheticParams, Workload, generate_periodic,
                                 generate_synthetic)

CFG = PolicyConfig(profiling_window=250_000, feedback_window=250_000)


def periodic(period_ns, duration_ns=2_000_000.0, reads=4, n_lines=64):
    return generate_periodic(n_lines, period_ns, duration_ns, reads_per_period=reads)


def two_phase():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = generate_synthetic(SyntheticParams(200, 0.05, 8000.0, 0.001, 150_000, 4.0, seed=1)).phases[0]
        b = generate_synthetic(SyntheticParams(200, 0.01, 300_000.0, 0.001, 150_000, 4.0, seed=2)).phases[0]
    a.phase_id, b.phase_id = "fast", "slow"
    a.weight, b.weight = 0.4, 0.6
    return Workload("two", [a, b])


# -- static -------------------------------------------------------------------------

def test_static_is_simulate_plus_energy():
    w = two_phase()
    r = run_static(w, BASE_PROFILE, CFG)
    stats = simulate(w, CFG.geometry, BASE_PROFILE, CFG.monitor, CFG.timing, CFG.l2_geometry)
    for p, (_, s) in zip(r.phases, stats.per_phase):
        assert p.latency_ns == s.sim_time_ns
        assert p.energy_nj == compute_energy(s, BASE_PROFILE, CFG.timing).total_nj
        assert p.migrations == 0 and p.overhead_ns == 0
    assert r.latency_total == pytest.approx(0.4 * r.phases[0].latency_ns + 0.6 * r.phases[1].latency_ns)


def test_static_rejects_infinite_stt_profile():
    bogus = RetentionProfile("stt-inf", math.inf, 0.438, 1.647, 0.003, 0.051, 4.659)
    with pytest.raises(ValueError, match="infinite"):
        run_static(two_phase(), bogus, CFG)


# -- SCART ----------------------------------------------------------------------------

def test_base_prediction_costs_only_prediction_time():
    w = two_phase()
    static = run_static(w, BASE_PROFILE, CFG)
    s = run_scart(w, ConstantModel(CFG.base_index), CFG)
    assert s.migrations == 0 and s.reverts == 0
    for a, b in zip(s.phases, static.phases):
        assert a.latency_ns == b.latency_ns
        assert a.energy_nj == pytest.approx(b.energy_nj, rel=1e-12)
        assert a.overhead_ns == CFG.prediction_time_ns
        assert a.overhead_energy_nj == pytest.approx(leakage_energy_nj(BASE_PROFILE, 4250.0))
    assert s.latency_total == pytest.approx(static.latency_total + 4250.0, rel=1e-12)


def test_bad_prediction_is_reverted():
    w = periodic(200_000.0, reads=40)
    s = run_scart(w, ConstantModel(0), CFG)
    ph = s.phases[0]
    assert (ph.reverts, ph.migrations) == (1, 2)
    assert ph.profiles == ("1ms", "10us", "1ms")
    assert ph.overhead_ns == CFG.prediction_time_ns + 2 * CFG.migration_cost_ns


def test_good_prediction_is_kept():
    w = periodic(60_000.0)
    s = run_scart(w, ConstantModel(4), CFG)
    assert s.phases[0].profiles == ("1ms", "100us")
    assert (s.reverts, s.migrations) == (0, 1)
    # shorter write stalls on the kept unit; the fixed overhead is charged separately
    assert s.phases[0].latency_ns < run_static(w, BASE_PROFILE, CFG).phases[0].latency_ns


def test_revert_excess_is_bounded_by_refilling_one_cache():
    # the literal bound (prediction + two migrations + feedback delta) can be exceeded by
    # lines that expired on the short unit and must be refetched after the revert
    w = periodic(200_000.0, reads=40, n_lines=400)
    static = run_static(w, BASE_PROFILE, CFG)
    s = run_scart(w, ConstantModel(0), CFG)
    ph = s.phases[0]
    delta = ph.feedback_objective - span_objective(w.phases[0], CFG.base, *ph.feedback_span, CFG)
    bound = CFG.prediction_time_ns + 2 * CFG.migration_cost_ns + delta
    excess = s.latency_total - static.latency_total
    t = CFG.timing
    refill = CFG.geometry.n_lines * (t.l2_hit_penalty_cycles + t.memory_penalty_cycles) / t.frequency_ghz
    assert excess <= bound + refill


def test_scart_checks_catalog():
    other = FeatureCatalog(("l1_read_per_ki",))
    with pytest.raises(CatalogMismatchError):
        run_scart(two_phase(), ConstantModel(0, other.version), CFG)


def test_out_of_range_prediction():
    with pytest.raises(PolicyError):
        run_scart(two_phase(), ConstantModel(9), CFG)


# -- LARS -----------------------------------------------------------------------------

def test_lars_overhead_is_six_migrations():
    r = run_lars_sampling(periodic(60_000.0), CFG)
    ph = r.phases[0]
    assert ph.migrations == 6
    assert ph.overhead_ns == 6 * 2304.0 == 13_824.0
    assert ph.profiles[:6] == tuple(p.name for p in RETENTION_SET)


def test_lars_single_unit_set():
    cfg = replace(CFG, retention_set=(BASE_PROFILE,))
    r = run_lars_sampling(periodic(60_000.0), cfg)
    assert r.migrations == 0 and r.overhead_ns == 0.0


@pytest.mark.parametrize("period_ns", [60_000.0, 200_000.0])
@pytest.mark.parametrize("objective", ["latency", "energy"])
def test_lars_agrees_with_exhaustive_on_stable_phase(period_ns, objective):
    w = periodic(period_ns)
    cfg = CFG.with_objective(objective)
    assert run_lars_sampling(w, cfg).chosen() == run_exhaustive(w, cfg).chosen()


# -- exhaustive -----------------------------------------------------------------------

def test_thirty_microsecond_rewrites_need_at_least_fifty():
    t = label_exhaustive(periodic(30_000.0), CFG)
    (best,) = t.labels("latency")
    assert best >= 2
    lat = t.phases[0].latency
    # the two shortest units pay for expiry misses
    assert lat[0] > lat[2] and lat[1] > lat[2]


def test_table_is_internally_consistent():
    t = label_exhaustive(two_phase(), CFG, jobs=2)
    for p in t.phases:
        for obj in ("latency", "energy"):
            v = p.latency if obj == "latency" else p.energy
            assert v[p.best(obj)] == v.min()
            assert p.best(obj) == int(np.nonzero(v == v.min())[0][0])


def test_dominated_profile_never_chosen():
    t = label_exhaustive(periodic(30_000.0), CFG)
    p = t.phases[0]
    dominated = [i for i in range(6) if any(p.latency[j] < p.latency[i] and p.energy[j] < p.energy[i]
                                            for j in range(6))]
    assert p.best("latency") not in dominated and p.best("energy") not in dominated


@given(st.floats(1e-3, 1e3))
def test_argmin_invariant_under_rescaling(scale):
    t = label_exhaustive(periodic(30_000.0, duration_ns=300_000.0), CFG)
    p = t.phases[0]
    assert int(np.argmin(p.latency * scale)) == p.best("latency")
    assert int(np.argmin(p.energy * scale)) == p.best("energy")


def test_energy_and_latency_labels_differ_somewhere_in_corpus():
    ws = standard_corpus(CorpusSpec(n_workloads=4, phase_instructions=600_000))
    differ = [(w.name, i) for w in ws for i, p in enumerate(label_exhaustive(w, CFG).phases)
              if p.best("latency") != p.best("energy")]
    assert differ


def test_exhaustive_jobs_do_not_change_results():
    w = two_phase()
    a, b = label_exhaustive(w, CFG, 1), label_exhaustive(w, CFG, 3)
    for x, y in zip(a.phases, b.phases):
        assert np.array_equal(x.latency, y.latency) and np.array_equal(x.energy, y.energy)


# -- savings --------------------------------------------------------------------------

def _result(name, lat, en, catalog=None):
    ph = PhaseOutcome("p", 1.0, 100, ("1ms",), latency_ns=lat, energy_nj=en)
    r = PolicyResult(name, "static", "latency", [ph])
    if catalog:
        r.catalog_version = catalog
    return r


def test_savings_examples():
    same = savings_report([_result("a", 100, 50)], [_result("a", 100, 50)])
    assert same.rows == [("a", 0.0, 0.0, 0.0)]
    r = savings_report([_result("a", 80, 50)], [_result("a", 100, 50)])
    assert r.rows[0][1] == pytest.approx(0.20)
    assert geomean_savings([0.8, 0.5]) == pytest.approx(1 - math.sqrt(0.4))
    assert geomean_savings([0.8, 0.5]) == pytest.approx(0.3675, abs=5e-5)


def test_savings_errors():
    with pytest.raises(PolicyError):
        savings_report([_result("a", 1, 1)], [_result("b", 1, 1)])
    with pytest.raises(CatalogMismatchError):
        savings_report([_result("a", 1, 1, "r1-x")], [_result("a", 1, 1)])


def test_result_dict_roundtrip():
    r = run_scart(two_phase(), ConstantModel(0), CFG)
    back = PolicyResult.from_dict(r.to_dict())
    assert back.to_dict() == r.to_dict()
    assert back.objective_total == r.objective_total


def test_run_policy_dispatch():
    w = periodic(60_000.0, duration_ns=300_000.0)
    assert run_policy(w, "static", CFG).mode == "static"
    assert run_policy(w, "lars", CFG).mode == "lars"
    with pytest.raises(PolicyError):
        run_policy(w, "scart", CFG)
    with pytest.raises(PolicyError):
        run_policy(w, "greedy", CFG)


# -- multi-programmed -----------------------------------------------------------------

def test_four_identical_traces_are_symmetric():
    w = two_phase()
    res = run_multiprogrammed([w] * 4, None, CFG)
    stats = [r.phases[0].stats for r in res]
    for s in stats[1:]:
        assert (s.l1_reads, s.l1_writes, s.l1_read_misses, s.l1_write_misses, s.expiry_evictions) == \
               (stats[0].l1_reads, stats[0].l1_writes, stats[0].l1_read_misses,
                stats[0].l1_write_misses, stats[0].expiry_evictions)


def _set_thrasher(offset_lines, n=16, rounds=40):
    # lines 64KB apart share one L2 set (and one L1 set)
    lines = [(offset_lines + i) * 1024 for i in range(n)] * rounds
    addrs = np.array(lines, dtype=np.uint64) * np.uint64(64)
    return Workload(f"t{offset_lines}", [PhaseTrace("p", 1.0, [5] * len(lines), [0] * len(lines), addrs)])


def test_shared_l2_conflicts_raise_miss_rate():
    ws = [_set_thrasher(0), _set_thrasher(100)]
    shared = run_multiprogrammed(ws, None, CFG, shared_l2=True)
    alone = run_multiprogrammed(ws, None, CFG, shared_l2=False)
    for a, b in zip(shared, alone):
        sa, sb = a.phases[0].stats, b.phases[0].stats
        assert sa.l2_misses / sa.l1_misses > sb.l2_misses / sb.l1_misses


def test_multiprogrammed_scart_runs_per_core():
    w = periodic(200_000.0, duration_ns=600_000.0, reads=40)
    res = run_multiprogrammed([w, w], ConstantModel(0), CFG)
    assert [r.reverts for r in res] == [1, 1]


# -- dataset --------------------------------------------------------------------------

def test_dataset_csv_roundtrip():
    rows = build_dataset([two_phase()], CFG)
    text = dataset_to_csv(rows, CFG)
    back = dataset_from_csv(text, CFG)
    assert len(back) == 2
    for a, b in zip(rows, back):
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.latency, b.latency) and np.array_equal(a.energy, b.energy)
        assert (a.workload, a.phase, a.weight, a.instructions) == (b.workload, b.phase, b.weight, b.instructions)
    assert dataset_to_csv(back, CFG) == text
    ds = rows_to_dataset(back, "energy", CFG)
    assert ds.y.tolist() == [r.best("energy") for r in rows]
    train(ds, 1)


def test_dataset_validation():
    text = dataset_to_csv(build_dataset([periodic(60_000.0, 300_000.0)], CFG), CFG)
    with pytest.raises(PolicyError):
        dataset_from_csv("workload,phase\n", CFG)
    small = replace(CFG, catalog=FeatureCatalog(("l1_read_per_ki",)))
    with pytest.raises(CatalogMismatchError):
        dataset_from_csv(text, small)
    bad = text.replace(",best_energy", ",best")
    with pytest.raises(PolicyError):
        dataset_from_csv(bad, CFG)


def test_config_validation():
    with pytest.raises(PolicyError):
        PolicyConfig(base=STT_10US, retention_set=(BASE_PROFILE,))
    with pytest.raises(PolicyError):
        PolicyConfig(feedback_epsilon=-0.1)
    assert PolicyConfig().migration_cost_ns == 2304.0
    assert CacheGeometry().n_lines == 512
