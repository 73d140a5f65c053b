import json

import numpy as np
import pytest

from pvsync.distributions import Distribution, zipf_pmf
from pvsync.errors import ConfigError
from pvsync.market import (
    BITS_PER_MB,
    CYCLES_PER_BIT_PER_GCYCLES_PER_MB,
    NOISE_FLOOR_MW,
    MarKind,
    ScenarioConfig,
    load_config,
    sample_scenario,
    validate_scenario,
)
from pvsync.simulator import scenario_seed

from builders import build_scenario, simple_tasks


def test_default_scenario_shape():
    s = sample_scenario(ScenarioConfig(n_avs=30, n_mars=30, n_rsus=1), 7)
    assert s.n_avs == 30 and s.n_mars == 30 and s.n_rsus == 1
    assert int(np.sum(s.mars.kind == MarKind.FUNCTIONAL)) == 1
    assert s.mars.kind[0] == MarKind.FUNCTIONAL
    assert int(np.sum(s.mars.kind == MarKind.INFOTAINMENT)) == 29
    assert s.fleet.task_size.shape == (30, 5)


def test_same_seed_same_scenario():
    cfg = ScenarioConfig()
    a, b = sample_scenario(cfg, 7), sample_scenario(cfg, 7)
    assert a == b
    assert a.to_json() == b.to_json()
    assert sample_scenario(cfg, 8) != a


def test_degenerate_config_gives_midpoints():
    mid = {
        "av": {"value": 0.55, "tx_power_mw": 0.5, "noise_mw": 1.0, "cache_size": 10},
        "task": {"size_mb": 0.5, "cycles_gcycles_per_mb": 0.5, "deadline_s": 1.0},
        "rsu": {"uplink_bw_mhz": 20, "downlink_bw_mhz": 20, "cpu_ghz": 3.6, "gpu_ghz": 19,
                "tx_power_mw": 2.5, "noise_mw": 1.0},
        "channel": {"gain": 0.5},
        "mar": {"ar_size_mb": 0.125, "gpu_cycles_gcycles_per_mb": 0.5, "hits": 3},
        "generative": {"score": 0.5},
    }
    s = sample_scenario(ScenarioConfig.from_dict(mid), 123)
    f = s.fleet
    assert np.all(f.value == 0.55)
    assert np.all(f.tx_power == 0.5)
    assert np.all(s.channel.noise_var_av == 1.0)
    assert np.all(f.cache_size == 10)
    assert np.all(f.task_size == 0.5 * BITS_PER_MB)
    assert np.all(f.task_cycles == 0.5 * CYCLES_PER_BIT_PER_GCYCLES_PER_MB)
    assert np.all(f.task_deadline == 1.0)
    assert s.rsus.uplink_bw[0] == 20e6 and s.rsus.cpu_freq[0] == 3.6e9 and s.rsus.gpu_freq[0] == 19e9
    assert s.rsus.tx_power[0] == 2.5
    assert np.all(s.channel.gain_g == 0.5)
    assert np.all(s.mars.ar_size == 0.125 * BITS_PER_MB)
    assert np.all(s.mars.hits == 3)
    assert np.all(s.gen.score_G == 0.5)


def test_unit_conversions():
    assert BITS_PER_MB == 8e6
    assert CYCLES_PER_BIT_PER_GCYCLES_PER_MB == 125.0


def test_default_scenario_validates():
    assert validate_scenario(sample_scenario(ScenarioConfig(), 7)) == []


def test_hits_over_cache_is_one_violation():
    s = build_scenario([0.5, 0.6], simple_tasks(2), hits=[[1, 1, 1], [1, 11, 1]], cache=10)
    v = validate_scenario(s)
    assert len(v) == 1
    assert v[0].field == "hits_h" and v[0].index == (1, 1)
    assert "cache" in v[0].rule


def test_two_functional_mars_is_one_violation():
    s = build_scenario([0.5], simple_tasks(1))
    kind = np.array(s.mars.kind)
    kind[1] = MarKind.FUNCTIONAL
    from dataclasses import replace
    bad = replace(s, mars=replace(s.mars, kind=kind))
    v = validate_scenario(bad)
    assert len(v) == 1 and v[0].field == "kind"


def test_validation_names_entity_field_rule():
    s = build_scenario([-0.5], simple_tasks(1))
    (v,) = validate_scenario(s)
    assert (v.entity, v.index, v.field) == ("av", 0, "value_v")
    assert "av[0].value_v" in str(v)


def test_sampled_values_within_support():
    cfg = ScenarioConfig()
    for seed in range(50):
        s = sample_scenario(cfg, seed)
        f = s.fleet
        assert np.all((f.value >= 0.1) & (f.value <= 1.0))
        assert np.all((f.tx_power >= 0) & (f.tx_power <= 1.0))
        assert np.all(s.channel.noise_var_av >= NOISE_FLOOR_MW)
        assert np.all((f.task_deadline >= 0.9) & (f.task_deadline <= 1.1))
        assert np.all(f.task_size <= BITS_PER_MB)
        assert np.all(f.task_cycles <= 125.0)
        assert np.all(s.mars.ar_size <= 0.25 * BITS_PER_MB)
        assert np.all((s.channel.gain_g >= 0) & (s.channel.gain_g <= 1))
        assert np.all((s.mars.hits >= 0) & (s.mars.hits <= f.cache_size[:, None]))
        assert np.all(s.rsus.tx_power <= 5.0)


def test_sampler_never_produces_invalid_scenarios():
    cfg = ScenarioConfig(n_avs=5, n_mars=5, n_tasks=3)
    bad = [seed for seed in range(10_000) if validate_scenario(sample_scenario(cfg, scenario_seed(0, seed)))]
    assert bad == []


def test_zipf_hits_respect_cache_and_distribution():
    cfg = ScenarioConfig(n_avs=200, n_mars=50, av_cache_size=Distribution.uniform(1, 4))
    s = sample_scenario(cfg, 1)
    assert np.all(s.mars.hits <= s.fleet.cache_size[:, None])
    assert np.all(s.mars.hits >= 1)
    pmf = zipf_pmf(2.0, 10)
    assert pmf.sum() == pytest.approx(1.0, rel=1e-12)
    big = sample_scenario(ScenarioConfig(n_avs=400, n_mars=50), 2).mars.hits
    # P(h = 1) for Zipf(2) truncated at 10
    assert np.mean(big == 1) == pytest.approx(pmf[0], abs=0.01)


@pytest.mark.parametrize("bad", [
    {"n_avs": 0},
    {"av": {"value": {"dist": "uniform", "low": 1.0, "high": 0.5}}},
    {"task": {"deadline_s": 0.0}},
    {"generative": {"score": 1.5}},
    {"unknown_key": 1},
    {"gamma": -1},
])
def test_bad_config_is_config_error(bad):
    with pytest.raises(ConfigError) as exc:
        ScenarioConfig.from_dict(bad)
    assert exc.value.diagnostics or str(exc.value)


def test_config_round_trip():
    cfg = ScenarioConfig(n_tasks=3, gamma=2.0, gen_score=Distribution.uniform(0.2, 0.8))
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg


def test_load_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n_avs": 4, "experiment": {"seeds": 3}}))
    cfg, raw = load_config(path)
    assert cfg.n_avs == 4 and raw["experiment"]["seeds"] == 3
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")


def test_entity_views():
    s = sample_scenario(ScenarioConfig(n_avs=3, n_mars=4, n_tasks=2), 5)
    av = s.av(1)
    assert av.id == 1 and len(av.tasks) == 2 and av.value_v == s.fleet.value[1]
    mar = s.mar(0)
    assert mar.kind == MarKind.FUNCTIONAL and len(mar.hits_h) == 3
    assert s.rsu(0).gpu_freq_fG == 19e9


def test_collapse_merges_tasks():
    s = build_scenario([0.5], [[(1e6, 100.0, 0.9), (3e6, 200.0, 1.1)]])
    c = s.collapsed()
    assert c.fleet.task_size[0, 0] == 4e6
    assert c.fleet.task_size[0, 0] * c.fleet.task_cycles[0, 0] == pytest.approx(1e6 * 100 + 3e6 * 200)
    assert c.fleet.task_deadline[0, 0] == 0.9
    single = build_scenario([0.5], [[(1e6, 100.0, 0.9)]])
    assert single.collapsed() is single
