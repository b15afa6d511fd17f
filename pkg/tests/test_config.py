import pytest

from retention_lab import config as C
from retention_lab.profiles import RETENTION_SET


def test_default_dump_is_canonical():
    text = C.dumps(C.ExperimentConfig())
    assert C.dumps(C.loads(text)) == text
    assert "inf" in text and "infns" not in text
    assert all(line == line.rstrip() for line in text.splitlines())


def test_default_policy_matches_table():
    pc = C.ExperimentConfig().policy()
    assert pc.retention_set == RETENTION_SET
    assert pc.base.name == "1ms"
    assert pc.migration_cost_ns == 2304.0


@pytest.mark.parametrize("text, ns", [("5ns", 5.0), ("2.304us", 2304.0), ("1ms", 1e6), ("2s", 2e9),
                                      ("7", 7.0), ("inf", float("inf"))])
def test_durations(text, ns):
    assert C.parse_duration_ns(text) == pytest.approx(ns)


@pytest.mark.parametrize("text, nj", [("0.026nj", 0.026), ("4.659uj", 4659.0), ("1mj", 1e6)])
def test_energies(text, nj):
    assert C.parse_energy_nj(text) == pytest.approx(nj)


def test_bad_units():
    with pytest.raises(C.ConfigError, match="unit"):
        C.parse_duration_ns("3parsecs")
    with pytest.raises(C.ConfigError):
        C.parse_energy_nj("lots")


def test_partial_config_roundtrip():
    text = "[policy]\nobjective = energy\nprofiling_window = 250000\nmigration_cost = 2.304us\n" \
           "[experiment]\nseed = 11\n"
    cfg = C.loads(text)
    assert cfg.objective == "energy" and cfg.profiling_window == 250_000 and cfg.seed == 11
    dumped = C.dumps(cfg)
    assert C.dumps(C.loads(dumped)) == dumped
    assert C.loads(dumped) == cfg


def test_unknown_keys_and_sections_rejected():
    with pytest.raises(C.ConfigError, match="unknown section"):
        C.loads("[turbo]\nx = 1\n")
    with pytest.raises(C.ConfigError, match="unknown key"):
        C.loads("[cache]\ncolour = red\n")


def test_profile_sections():
    text = C.dumps(C.ExperimentConfig()) + "\n[profile.5us]\ntechnology = sttram\nretention = 5us\n" \
        "hit_latency = 0.47ns\nwrite_latency = 0.55ns\nread_energy = 0.003nj\nwrite_energy = 0.024nj\n" \
        "leakage_mw = 4.659\n"
    cfg = C.loads(text)
    assert cfg.profile("5us").retention_time_ns == 5000.0
    with pytest.raises(C.ConfigError, match="missing"):
        C.loads("[profile.x]\ntechnology = sttram\n")


def test_invalid_references():
    with pytest.raises(C.ConfigError):
        C.loads("[policy]\nbase = 2ms\n")
    with pytest.raises(C.ConfigError):
        C.loads("[policy]\nobjective = speed\n")
    with pytest.raises(C.ConfigError):
        C.loads("[cache]\ncapacity_bytes = 1000\n")
    with pytest.raises(C.ConfigError):
        C.loads("[policy]\nretention_set = 10us, 50us\n")


def test_seed_precedence(monkeypatch):
    monkeypatch.setenv(C.SEED_ENV, "77")
    assert C.ExperimentConfig().effective_seed() == 77
    assert C.ExperimentConfig(seed=5).effective_seed() == 5
    assert C.ExperimentConfig(seed=5).effective_seed(9) == 9
    monkeypatch.delenv(C.SEED_ENV)
    assert C.ExperimentConfig().effective_seed() == 0
    monkeypatch.setenv(C.SEED_ENV, "abc")
    with pytest.raises(C.ConfigError):
        C.ExperimentConfig().effective_seed()
