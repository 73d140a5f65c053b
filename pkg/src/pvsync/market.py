"""Market entities, scenario configuration, sampling, and validation.

A :class:`Scenario` stores the fleet, RSUs and MAR roster as struct-of-arrays
tables (numpy) so that the delay and auction layers can evaluate every
(AV, MAR, task) combination at once. The per-entity profile classes
(:class:`AvProfile`, :class:`DtTask`, :class:`RsuProfile`,
:class:`MarProfile`) are light views used for hand-built scenarios and for
the scalar formula API.

Units inside a scenario are SI: bits, cycles/bit, Hz, cycles/s, mW, seconds.
The JSON configuration uses MB, Gcycles/MB, MHz, GHz, mW and seconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from enum import IntEnum
from functools import cached_property
from typing import Optional, Sequence

import jsonschema
import numpy as np

from .distributions import Distribution, truncated_zipf
from .errors import ConfigError

BITS_PER_MB = 8e6
HZ_PER_MHZ = 1e6
HZ_PER_GHZ = 1e9
# Gcycles/MB -> cycles/bit
CYCLES_PER_BIT_PER_GCYCLES_PER_MB = 1e9 / BITS_PER_MB
NOISE_FLOOR_MW = 1e-6
MIN_SIZE_BITS = 1.0
MIN_POWER_MW = 1e-9


class MarKind(IntEnum):
    FUNCTIONAL = 0
    INFOTAINMENT = 1


# ---------------------------------------------------------------------------
# Per-entity views
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DtTask:
    size_s: float  # bits
    cycles_per_unit_e: float  # cycles/bit
    deadline_d: float  # seconds


@dataclass(frozen=True)
class AvProfile:
    id: int
    value_v: float
    tx_power_p: float  # mW
    cache_size_C: int
    tasks: tuple
    match_shock: float = 1.0


@dataclass(frozen=True)
class RsuProfile:
    id: int
    uplink_bw_Bu: float  # Hz
    downlink_bw_Bd: float  # Hz
    cpu_freq_fC: float  # cycles/s
    gpu_freq_fG: float  # cycles/s
    tx_power_P: float  # mW
    noise_var_rsu: float  # mW


@dataclass(frozen=True)
class MarProfile:
    id: int
    kind: MarKind
    ar_size_s: float  # bits per AR layer
    ar_cycles_per_unit_e: float  # GPU cycles/bit
    hits_h: tuple  # one count per AV
    bid_b: float = 0.0
    match_shock: Optional[tuple] = None  # per AV, defaults to 1.0


# ---------------------------------------------------------------------------
# Struct-of-arrays tables
# ---------------------------------------------------------------------------


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FleetArrays:
    """AV fleet. Task arrays are (I, N); ``task_mask`` marks real tasks."""

    value: np.ndarray
    tx_power: np.ndarray
    cache_size: np.ndarray
    match_shock: np.ndarray
    task_size: np.ndarray
    task_cycles: np.ndarray
    task_deadline: np.ndarray
    task_mask: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            dtype = {"cache_size": np.int64, "task_mask": bool}.get(f.name, float)
            object.__setattr__(self, f.name, _frozen(getattr(self, f.name), dtype))

    @property
    def n(self):
        return self.value.shape[0]


@dataclass(frozen=True, eq=False)
class RsuArrays:
    uplink_bw: np.ndarray
    downlink_bw: np.ndarray
    cpu_freq: np.ndarray
    gpu_freq: np.ndarray
    tx_power: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _frozen(getattr(self, f.name)))

    @property
    def n(self):
        return self.uplink_bw.shape[0]


@dataclass(frozen=True, eq=False)
class MarArrays:
    """MAR roster; ``hits`` and ``match_shock`` are indexed (AV, MAR)."""

    kind: np.ndarray
    ar_size: np.ndarray
    ar_cycles: np.ndarray
    hits: np.ndarray
    match_shock: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            dtype = np.int64 if f.name in ("kind", "hits") else float
            object.__setattr__(self, f.name, _frozen(getattr(self, f.name), dtype))

    @property
    def n(self):
        return self.kind.shape[0]


@dataclass(frozen=True, eq=False)
class ChannelState:
    gain_g: np.ndarray  # (I, J)
    noise_var_av: np.ndarray  # (I,) mW

    def __post_init__(self):
        object.__setattr__(self, "gain_g", _frozen(self.gain_g))
        object.__setattr__(self, "noise_var_av", _frozen(self.noise_var_av))


@dataclass(frozen=True, eq=False)
class GenScoreModel:
    score_G: np.ndarray  # (I, J, K)
    theta_exponent: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "score_G", _frozen(self.score_G))

    def theta(self, x):
        return np.power(x, self.theta_exponent)


@dataclass(frozen=True)
class MatchPrior:
    """What the market knows about match-quality randomness (the F_{i,k} family).

    Hit counts are ``min(hits, C_i)``; realised match quality is the
    generative-score value times a common per-AV shock and an idiosyncratic
    per-(AV, MAR) shock, both mean one.
    """

    hits: Distribution = field(default_factory=lambda: Distribution("zipf", {"a": 2.0}))
    common_shock: Distribution = field(default_factory=lambda: Distribution.constant(1.0))
    idio_shock: Distribution = field(default_factory=lambda: Distribution.constant(1.0))


@dataclass(frozen=True, eq=False)
class Scenario:
    fleet: FleetArrays
    rsus: RsuArrays
    mars: MarArrays
    channel: ChannelState
    gen: GenScoreModel
    gamma: float
    seed: int
    prior: MatchPrior = field(default_factory=MatchPrior)

    # -- entity views -------------------------------------------------------

    @property
    def n_avs(self):
        return self.fleet.n

    @property
    def n_mars(self):
        return self.mars.n

    @property
    def n_rsus(self):
        return self.rsus.n

    def av(self, i):
        f = self.fleet
        tasks = tuple(
            DtTask(float(f.task_size[i, n]), float(f.task_cycles[i, n]), float(f.task_deadline[i, n]))
            for n in np.flatnonzero(f.task_mask[i])
        )
        return AvProfile(i, float(f.value[i]), float(f.tx_power[i]), int(f.cache_size[i]), tasks,
                         float(f.match_shock[i]))

    def rsu(self, j):
        r = self.rsus
        return RsuProfile(j, float(r.uplink_bw[j]), float(r.downlink_bw[j]), float(r.cpu_freq[j]),
                          float(r.gpu_freq[j]), float(r.tx_power[j]), float(r.noise[j]))

    def mar(self, k):
        m = self.mars
        return MarProfile(k, MarKind(int(m.kind[k])), float(m.ar_size[k]), float(m.ar_cycles[k]),
                          tuple(int(h) for h in m.hits[:, k]),
                          match_shock=tuple(float(s) for s in m.match_shock[:, k]))

    @property
    def avs(self):
        return [self.av(i) for i in range(self.n_avs)]

    @property
    def mar_list(self):
        return [self.mar(k) for k in range(self.n_mars)]

    @property
    def rsu_list(self):
        return [self.rsu(j) for j in range(self.n_rsus)]

    # -- construction -------------------------------------------------------

    @classmethod
    def from_profiles(cls, avs: Sequence[AvProfile], rsus: Sequence[RsuProfile],
                      mars: Sequence[MarProfile], channel: ChannelState, gen: GenScoreModel,
                      gamma=1.0, seed=0, prior=None):
        n_tasks = max((len(a.tasks) for a in avs), default=0)
        shape = (len(avs), n_tasks)
        size, cyc, dl = np.zeros(shape), np.zeros(shape), np.ones(shape)
        mask = np.zeros(shape, dtype=bool)
        for i, a in enumerate(avs):
            for n, t in enumerate(a.tasks):
                size[i, n], cyc[i, n], dl[i, n] = t.size_s, t.cycles_per_unit_e, t.deadline_d
                mask[i, n] = True
        fleet = FleetArrays(
            value=[a.value_v for a in avs], tx_power=[a.tx_power_p for a in avs],
            cache_size=[a.cache_size_C for a in avs], match_shock=[a.match_shock for a in avs],
            task_size=size, task_cycles=cyc, task_deadline=dl, task_mask=mask,
        )
        rsu_arr = RsuArrays(
            uplink_bw=[r.uplink_bw_Bu for r in rsus], downlink_bw=[r.downlink_bw_Bd for r in rsus],
            cpu_freq=[r.cpu_freq_fC for r in rsus], gpu_freq=[r.gpu_freq_fG for r in rsus],
            tx_power=[r.tx_power_P for r in rsus], noise=[r.noise_var_rsu for r in rsus],
        )
        hits = np.array([m.hits_h for m in mars], dtype=np.int64).T.reshape(len(avs), len(mars))
        shock = np.array([m.match_shock if m.match_shock is not None else (1.0,) * len(avs)
                          for m in mars], dtype=float).T.reshape(len(avs), len(mars))
        mar_arr = MarArrays(kind=[int(m.kind) for m in mars], ar_size=[m.ar_size_s for m in mars],
                            ar_cycles=[m.ar_cycles_per_unit_e for m in mars], hits=hits, match_shock=shock)
        return cls(fleet, rsu_arr, mar_arr, channel, gen, float(gamma), int(seed), prior or MatchPrior())

    def with_deadlines(self, deadlines):
        """Copy with the task deadline matrix replaced (e.g. by submitted bids)."""
        deadlines = np.asarray(deadlines, dtype=float)
        if deadlines.shape != self.fleet.task_deadline.shape:
            raise ValueError("deadline matrix shape mismatch")
        if np.array_equal(deadlines, self.fleet.task_deadline):
            return self
        return replace(self, fleet=replace(self.fleet, task_deadline=deadlines))

    def with_values(self, values):
        return replace(self, fleet=replace(self.fleet, value=np.asarray(values, dtype=float)))

    def collapsed(self):
        """Copy where each AV's tasks merge into one aggregate task.

        Sizes and cycle counts add up; the aggregate deadline is the tightest
        one. With a single task per AV this is the identity.
        """
        f = self.fleet
        if f.task_mask.shape[1] <= 1:
            return self
        size = np.where(f.task_mask, f.task_size, 0.0)
        total = size.sum(axis=1)
        cycles = (size * np.where(f.task_mask, f.task_cycles, 0.0)).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            density = np.where(total > 0, cycles / total, 0.0)
        deadline = np.where(f.task_mask, f.task_deadline, np.inf).min(axis=1)
        has = f.task_mask.any(axis=1)
        fleet = replace(
            f,
            task_size=total[:, None], task_cycles=density[:, None],
            task_deadline=np.where(has, deadline, 1.0)[:, None], task_mask=has[:, None],
        )
        return replace(self, fleet=fleet)

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        def arrays(obj):
            return {f.name: getattr(obj, f.name).tolist() for f in fields(obj)}

        return {
            "seed": self.seed,
            "gamma": self.gamma,
            "fleet": arrays(self.fleet),
            "rsus": arrays(self.rsus),
            "mars": arrays(self.mars),
            "channel": {"gain_g": self.channel.gain_g.tolist(),
                        "noise_var_av": self.channel.noise_var_av.tolist()},
            "gen": {"score_G": self.gen.score_G.tolist(), "theta_exponent": self.gen.theta_exponent},
            "prior": {"hits": self.prior.hits.to_json(), "common_shock": self.prior.common_shock.to_json(),
                      "idio_shock": self.prior.idio_shock.to_json()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.to_json() == other.to_json()

    __hash__ = None

    @cached_property
    def functional_index(self):
        idx = np.flatnonzero(self.mars.kind == MarKind.FUNCTIONAL)
        return int(idx[0]) if idx.size else None


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_DIST_SCHEMA = {
    "oneOf": [
        {"type": "number"},
        {"type": "object", "required": ["dist", "value"],
         "properties": {"dist": {"const": "constant"}, "value": {"type": "number"}},
         "additionalProperties": False},
        {"type": "object", "required": ["dist", "low", "high"],
         "properties": {"dist": {"const": "uniform"}, "low": {"type": "number"}, "high": {"type": "number"}},
         "additionalProperties": False},
        {"type": "object", "required": ["dist", "mean", "std"],
         "properties": {"dist": {"const": "abs_normal"}, "mean": {"type": "number"},
                        "std": {"type": "number", "minimum": 0}, "floor": {"type": "number", "minimum": 0}},
         "additionalProperties": False},
        {"type": "object", "required": ["dist", "a"],
         "properties": {"dist": {"const": "zipf"}, "a": {"type": "number", "exclusiveMinimum": 1}},
         "additionalProperties": False},
        {"type": "object", "required": ["dist", "sigma"],
         "properties": {"dist": {"const": "lognormal"}, "sigma": {"type": "number", "minimum": 0}},
         "additionalProperties": False},
    ]
}


def _group(**props):
    return {"type": "object", "properties": {k: _DIST_SCHEMA for k in props}, "additionalProperties": False}


# Units as configured: value dimensionless; power/noise mW; sizes MB;
# cycle densities Gcycles/MB; bandwidth MHz; frequencies GHz; deadlines s.
CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "n_avs": {"type": "integer", "minimum": 1},
        "n_mars": {"type": "integer", "minimum": 1},
        "n_rsus": {"type": "integer", "minimum": 1},
        "n_tasks": {"type": "integer", "minimum": 1},
        "gamma": {"type": "number", "minimum": 0},
        "theta_exponent": {"type": "number", "minimum": 1},
        "av": _group(value=1, tx_power_mw=1, noise_mw=1, cache_size=1),
        "task": _group(size_mb=1, cycles_gcycles_per_mb=1, deadline_s=1),
        "rsu": _group(uplink_bw_mhz=1, downlink_bw_mhz=1, cpu_ghz=1, gpu_ghz=1, tx_power_mw=1, noise_mw=1),
        "channel": _group(gain=1),
        "mar": _group(ar_size_mb=1, gpu_cycles_gcycles_per_mb=1, hits=1),
        "generative": _group(score=1),
        "match_shock": _group(common=1, idiosyncratic=1),
        "experiment": {"type": "object"},
        "description": {"type": "string"},
    },
    "additionalProperties": False,
}


def _u(lo, hi):
    return Distribution.uniform(lo, hi)


def _c(v):
    return Distribution.constant(v)


def _abs_normal():
    return Distribution("abs_normal", {"mean": 0.0, "std": 1.0, "floor": NOISE_FLOOR_MW})


@dataclass(frozen=True)
class ScenarioConfig:
    n_avs: int = 30
    n_mars: int = 30
    n_rsus: int = 1
    n_tasks: int = 5
    gamma: float = 1.0
    theta_exponent: float = 1.0
    av_value: Distribution = field(default_factory=lambda: _u(0.1, 1.0))
    av_tx_power_mw: Distribution = field(default_factory=lambda: _u(0.0, 1.0))
    av_noise_mw: Distribution = field(default_factory=_abs_normal)
    av_cache_size: Distribution = field(default_factory=lambda: _c(10))
    task_size_mb: Distribution = field(default_factory=lambda: _u(0.0, 1.0))
    task_cycles_gcycles_per_mb: Distribution = field(default_factory=lambda: _u(0.0, 1.0))
    task_deadline_s: Distribution = field(default_factory=lambda: _u(0.9, 1.1))
    rsu_uplink_bw_mhz: Distribution = field(default_factory=lambda: _c(20))
    rsu_downlink_bw_mhz: Distribution = field(default_factory=lambda: _c(20))
    rsu_cpu_ghz: Distribution = field(default_factory=lambda: _c(3.6))
    rsu_gpu_ghz: Distribution = field(default_factory=lambda: _c(19))
    rsu_tx_power_mw: Distribution = field(default_factory=lambda: _u(0.0, 5.0))
    rsu_noise_mw: Distribution = field(default_factory=_abs_normal)
    channel_gain: Distribution = field(default_factory=lambda: _u(0.0, 1.0))
    mar_ar_size_mb: Distribution = field(default_factory=lambda: _u(0.0, 0.25))
    mar_gpu_cycles_gcycles_per_mb: Distribution = field(default_factory=lambda: _u(0.0, 1.0))
    hits: Distribution = field(default_factory=lambda: Distribution("zipf", {"a": 2.0}))
    gen_score: Distribution = field(default_factory=lambda: _c(0.5))
    common_shock: Distribution = field(default_factory=lambda: _c(1.0))
    idio_shock: Distribution = field(default_factory=lambda: _c(1.0))

    # JSON key path -> attribute name
    _LAYOUT = {
        ("av", "value"): "av_value", ("av", "tx_power_mw"): "av_tx_power_mw",
        ("av", "noise_mw"): "av_noise_mw", ("av", "cache_size"): "av_cache_size",
        ("task", "size_mb"): "task_size_mb", ("task", "cycles_gcycles_per_mb"): "task_cycles_gcycles_per_mb",
        ("task", "deadline_s"): "task_deadline_s",
        ("rsu", "uplink_bw_mhz"): "rsu_uplink_bw_mhz", ("rsu", "downlink_bw_mhz"): "rsu_downlink_bw_mhz",
        ("rsu", "cpu_ghz"): "rsu_cpu_ghz", ("rsu", "gpu_ghz"): "rsu_gpu_ghz",
        ("rsu", "tx_power_mw"): "rsu_tx_power_mw", ("rsu", "noise_mw"): "rsu_noise_mw",
        ("channel", "gain"): "channel_gain",
        ("mar", "ar_size_mb"): "mar_ar_size_mb", ("mar", "gpu_cycles_gcycles_per_mb"): "mar_gpu_cycles_gcycles_per_mb",
        ("mar", "hits"): "hits",
        ("generative", "score"): "gen_score",
        ("match_shock", "common"): "common_shock", ("match_shock", "idiosyncratic"): "idio_shock",
    }

    def __post_init__(self):
        problems = []
        for name in ("n_avs", "n_mars", "n_rsus", "n_tasks"):
            if int(getattr(self, name)) < 1:
                problems.append(f"{name} must be >= 1")
        if self.gamma < 0:
            problems.append("gamma must be >= 0")
        if self.theta_exponent < 1:
            problems.append("theta_exponent must be >= 1")

        def lo(attr):
            return getattr(self, attr).support()[0]

        positive = ("av_value", "task_deadline_s", "rsu_uplink_bw_mhz", "rsu_downlink_bw_mhz",
                    "rsu_cpu_ghz", "rsu_gpu_ghz")
        nonneg = ("av_tx_power_mw", "task_size_mb", "task_cycles_gcycles_per_mb", "rsu_tx_power_mw",
                  "channel_gain", "mar_ar_size_mb", "mar_gpu_cycles_gcycles_per_mb", "common_shock",
                  "idio_shock", "av_noise_mw", "rsu_noise_mw")
        for attr in positive:
            if not lo(attr) > 0:
                problems.append(f"{attr} support must be strictly positive")
        for attr in nonneg:
            if lo(attr) < 0:
                problems.append(f"{attr} support must be non-negative")
        if lo("av_cache_size") < 1:
            problems.append("av_cache_size support must be >= 1")
        g_lo, g_hi = self.gen_score.support()
        if g_lo < 0 or g_hi > 1:
            problems.append("gen_score support must lie in [0, 1]")
        if self.hits.kind not in ("zipf", "constant") or lo("hits") < 0:
            problems.append("hits must be a zipf or a non-negative constant distribution")
        for attr in ("common_shock", "idio_shock"):
            if getattr(self, attr).kind not in ("constant", "lognormal"):
                problems.append(f"{attr} must be constant or lognormal")
        if problems:
            raise ConfigError("invalid scenario configuration", problems)

    @classmethod
    def from_dict(cls, data):
        validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
        errors = sorted(validator.iter_errors(data), key=lambda e: list(e.path))
        if errors:
            raise ConfigError(
                "configuration does not match schema",
                [f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors],
            )
        kwargs = {k: data[k] for k in ("n_avs", "n_mars", "n_rsus", "n_tasks", "gamma", "theta_exponent")
                  if k in data}
        for (group, key), attr in cls._LAYOUT.items():
            if key in data.get(group, {}):
                kwargs[attr] = Distribution.from_json(data[group][key])
        return cls(**kwargs)

    def to_dict(self):
        out = {k: getattr(self, k) for k in ("n_avs", "n_mars", "n_rsus", "n_tasks", "gamma", "theta_exponent")}
        for (group, key), attr in self._LAYOUT.items():
            out.setdefault(group, {})[key] = getattr(self, attr).to_json()
        return out

    def replace(self, **changes):
        return replace(self, **changes)


def load_config(path):
    """Read a JSON config file; returns ``(ScenarioConfig, raw_dict)``."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {path}", [str(exc)]) from exc
    return ScenarioConfig.from_dict(data), data


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Draw one market instance. Same ``(config, seed)`` gives an identical scenario."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    I, K, J, N = config.n_avs, config.n_mars, config.n_rsus, config.n_tasks

    value = config.av_value.sample(rng, I)
    av_power = config.av_tx_power_mw.sample(rng, I)
    av_noise = np.maximum(config.av_noise_mw.sample(rng, I), NOISE_FLOOR_MW)
    cache = np.maximum(np.floor(config.av_cache_size.sample(rng, I)), 1).astype(np.int64)

    size = np.maximum(config.task_size_mb.sample(rng, (I, N)) * BITS_PER_MB, MIN_SIZE_BITS)
    cycles = config.task_cycles_gcycles_per_mb.sample(rng, (I, N)) * CYCLES_PER_BIT_PER_GCYCLES_PER_MB
    deadline = config.task_deadline_s.sample(rng, (I, N))

    rsus = RsuArrays(
        uplink_bw=config.rsu_uplink_bw_mhz.sample(rng, J) * HZ_PER_MHZ,
        downlink_bw=config.rsu_downlink_bw_mhz.sample(rng, J) * HZ_PER_MHZ,
        cpu_freq=config.rsu_cpu_ghz.sample(rng, J) * HZ_PER_GHZ,
        gpu_freq=config.rsu_gpu_ghz.sample(rng, J) * HZ_PER_GHZ,
        tx_power=np.maximum(config.rsu_tx_power_mw.sample(rng, J), MIN_POWER_MW),
        noise=np.maximum(config.rsu_noise_mw.sample(rng, J), NOISE_FLOOR_MW),
    )
    gain = config.channel_gain.sample(rng, (I, J))

    ar_size = np.maximum(config.mar_ar_size_mb.sample(rng, K) * BITS_PER_MB, MIN_SIZE_BITS)
    ar_cycles = config.mar_gpu_cycles_gcycles_per_mb.sample(rng, K) * CYCLES_PER_BIT_PER_GCYCLES_PER_MB
    hits = sample_hits(config.hits, rng, cache, K)
    score = config.gen_score.sample(rng, (I, J, K))
    common = config.common_shock.sample(rng, I)
    idio = config.idio_shock.sample(rng, (I, K))

    kind = np.full(K, int(MarKind.INFOTAINMENT))
    kind[0] = int(MarKind.FUNCTIONAL)

    fleet = FleetArrays(value=value, tx_power=av_power, cache_size=cache, match_shock=common,
                        task_size=size, task_cycles=cycles, task_deadline=deadline,
                        task_mask=np.ones((I, N), dtype=bool))
    mars = MarArrays(kind=kind, ar_size=ar_size, ar_cycles=ar_cycles, hits=hits, match_shock=idio)
    return Scenario(
        fleet=fleet, rsus=rsus, mars=mars,
        channel=ChannelState(gain_g=gain, noise_var_av=av_noise),
        gen=GenScoreModel(score_G=score, theta_exponent=float(config.theta_exponent)),
        gamma=float(config.gamma), seed=int(seed),
        prior=MatchPrior(hits=config.hits, common_shock=config.common_shock, idio_shock=config.idio_shock),
    )


def sample_hits(dist: Distribution, rng, cache, n_mars, size=None):
    """Hit-cache counts truncated to each AV's cache size, shape ``size or (I, K)``."""
    cache = np.asarray(cache)
    shape = size if size is not None else (cache.shape[0], n_mars)
    cap = cache.reshape(cache.shape + (1,) * (len(shape) - cache.ndim))
    if dist.kind == "constant":
        return np.minimum(np.full(shape, int(dist.params["value"])), cap).astype(np.int64)
    return truncated_zipf(rng, dist.params["a"], cap, shape).astype(np.int64, copy=False)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    entity: str
    index: object
    field: str
    rule: str

    def __str__(self):
        return f"{self.entity}[{self.index}].{self.field}: {self.rule}"


def validate_scenario(s: Scenario) -> list:
    """Every broken invariant, as a list of :class:`Violation`; empty when well formed."""
    out = []

    def check(bad, entity, field_name, rule):
        for idx in np.argwhere(np.asarray(bad)):
            key = int(idx[0]) if idx.size == 1 else tuple(int(x) for x in idx)
            out.append(Violation(entity, key, field_name, rule))

    f, r, m = s.fleet, s.rsus, s.mars
    I, K = f.n, m.n
    if I == 0:
        out.append(Violation("scenario", None, "avs", "entity list must be non-empty"))
    if r.n == 0:
        out.append(Violation("scenario", None, "rsus", "entity list must be non-empty"))
    if K == 0:
        out.append(Violation("scenario", None, "mars", "entity list must be non-empty"))

    check(~(f.value > 0), "av", "value_v", "must be > 0")
    check(~(f.tx_power >= 0), "av", "tx_power_p", "must be >= 0")
    check(~(f.cache_size >= 1), "av", "cache_size_C", "must be >= 1")
    check(~(f.match_shock >= 0), "av", "match_shock", "must be >= 0")
    check(~f.task_mask.any(axis=1), "av", "tasks", "must be non-empty")
    mask = f.task_mask
    check(mask & ~(f.task_size > 0), "task", "size_s", "must be > 0")
    check(mask & ~(f.task_cycles >= 0), "task", "cycles_per_unit_e", "must be >= 0")
    check(mask & ~(f.task_deadline > 0), "task", "deadline_d", "must be > 0")

    for name in ("uplink_bw", "downlink_bw", "cpu_freq", "gpu_freq", "tx_power", "noise"):
        check(~(getattr(r, name) > 0), "rsu", name, "must be > 0")

    n_functional = int(np.sum(m.kind == MarKind.FUNCTIONAL))
    if K and n_functional != 1:
        out.append(Violation("mar", None, "kind", f"exactly one functional MAR required, found {n_functional}"))
    check(~np.isin(m.kind, [MarKind.FUNCTIONAL, MarKind.INFOTAINMENT]), "mar", "kind", "unknown kind")
    check(~(m.ar_size > 0), "mar", "ar_size_s", "must be > 0")
    check(~(m.ar_cycles >= 0), "mar", "ar_cycles_per_unit_e", "must be >= 0")

    ch, gen = s.channel, s.gen
    if m.hits.shape != (I, K):
        out.append(Violation("mar", None, "hits_h", f"shape {m.hits.shape} does not match (I, K)=({I}, {K})"))
    else:
        check(m.hits < 0, "hits", "hits_h", "must be >= 0")
        check(m.hits > f.cache_size[:, None], "hits", "hits_h", "must not exceed cache_size_C (hit-cache capacity)")
        check(~(m.match_shock >= 0), "hits", "match_shock", "must be >= 0")
    if ch.gain_g.shape != (I, r.n):
        out.append(Violation("channel", None, "gain_g", "shape does not match (I, J)"))
    else:
        check(~(ch.gain_g >= 0), "channel", "gain_g", "must be >= 0")
    if ch.noise_var_av.shape != (I,):
        out.append(Violation("channel", None, "noise_var_av", "shape does not match (I,)"))
    else:
        check(~(ch.noise_var_av > 0), "channel", "noise_var_av", "must be > 0")
    if gen.score_G.shape != (I, r.n, K):
        out.append(Violation("gen", None, "score_G", "shape does not match (I, J, K)"))
    else:
        check(~((gen.score_G >= 0) & (gen.score_G <= 1)), "gen", "score_G", "must lie in [0, 1]")
    if not gen.theta_exponent >= 1:
        out.append(Violation("gen", None, "theta_exponent", "must be >= 1"))
    if not s.gamma >= 0:
        out.append(Violation("scenario", None, "gamma", "must be >= 0"))
    return out
