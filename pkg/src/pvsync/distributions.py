"""Parametric distributions used to configure scenario sampling.

Every distribution serializes to a small JSON object ``{"dist": <name>, ...}``;
a bare number is shorthand for a constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import zeta

from .errors import ConfigError

KINDS = ("constant", "uniform", "abs_normal", "zipf", "lognormal")


@dataclass(frozen=True)
class Distribution:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown distribution {self.kind!r}; expected one of {KINDS}")
        p = self.params
        if self.kind == "constant":
            _require(p, "value")
        elif self.kind == "uniform":
            _require(p, "low", "high")
            if not p["low"] <= p["high"]:
                raise ConfigError(f"uniform bounds out of order: low={p['low']} > high={p['high']}")
        elif self.kind == "abs_normal":
            _require(p, "mean", "std")
            if p["std"] < 0:
                raise ConfigError(f"abs_normal std must be >= 0, got {p['std']}")
            if p.get("floor", 0.0) < 0:
                raise ConfigError("abs_normal floor must be >= 0")
        elif self.kind == "zipf":
            _require(p, "a")
            if not p["a"] > 1:
                raise ConfigError(f"zipf exponent must be > 1, got {p['a']}")
        elif self.kind == "lognormal":
            _require(p, "sigma")
            if p["sigma"] < 0:
                raise ConfigError(f"lognormal sigma must be >= 0, got {p['sigma']}")

    # -- construction -------------------------------------------------------

    @classmethod
    def constant(cls, value):
        return cls("constant", {"value": float(value)})

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", {"low": float(low), "high": float(high)})

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, (int, float)) and not isinstance(obj, bool):
            return cls.constant(obj)
        if not isinstance(obj, dict) or "dist" not in obj:
            raise ConfigError(f"distribution must be a number or an object with 'dist', got {obj!r}")
        params = {k: float(v) for k, v in obj.items() if k != "dist"}
        return cls(obj["dist"], params)

    def to_json(self):
        return {"dist": self.kind, **self.params}

    # -- properties ---------------------------------------------------------

    @property
    def is_constant(self):
        if self.kind == "constant":
            return True
        if self.kind == "uniform":
            return self.params["low"] == self.params["high"]
        if self.kind in ("abs_normal", "lognormal"):
            return self.params.get("std", self.params.get("sigma")) == 0
        return False

    def support(self, cap=None):
        """Closed interval containing every value ``sample`` can return."""
        p = self.params
        if self.kind == "constant":
            v = p["value"]
            return (min(v, cap), min(v, cap)) if cap is not None else (v, v)
        if self.kind == "uniform":
            return p["low"], p["high"]
        if self.kind == "abs_normal":
            return p.get("floor", 0.0), math.inf
        if self.kind == "zipf":
            return 1.0, math.inf if cap is None else float(cap)
        return 0.0, math.inf

    def mean(self):
        p = self.params
        if self.kind == "constant":
            return p["value"]
        if self.kind == "uniform":
            return 0.5 * (p["low"] + p["high"])
        if self.kind == "lognormal":
            return 1.0
        raise NotImplementedError(f"closed-form mean not provided for {self.kind}")

    # -- sampling -----------------------------------------------------------

    def sample(self, rng, size, cap=None):
        """Draw ``size`` values. ``cap`` truncates integer draws at ``min(x, cap)``."""
        p = self.params
        if self.kind == "constant":
            out = np.full(size, p["value"], dtype=float)
        elif self.kind == "uniform":
            if p["low"] == p["high"]:
                out = np.full(size, p["low"], dtype=float)
            else:
                out = rng.uniform(p["low"], p["high"], size)
        elif self.kind == "abs_normal":
            if p["std"] == 0:
                out = np.full(size, abs(p["mean"]), dtype=float)
            else:
                out = np.abs(rng.normal(p["mean"], p["std"], size))
            out = np.maximum(out, p.get("floor", 0.0))
        elif self.kind == "lognormal":
            s = p["sigma"]
            if s == 0:
                out = np.ones(size)
            else:
                # mean-one normalisation: E[exp(N(-s^2/2, s))] = 1
                out = rng.lognormal(-0.5 * s * s, s, size)
        else:
            if cap is None:
                return rng.zipf(p["a"], size).astype(float)
            return truncated_zipf(rng, p["a"], cap, size).astype(float)
        if cap is not None:
            out = np.minimum(out, cap)
        return out


def _require(params, *names):
    missing = [n for n in names if n not in params]
    if missing:
        raise ConfigError(f"distribution missing parameter(s): {', '.join(missing)}")


@lru_cache(maxsize=64)
def _zipf_cdf(a, cap):
    j = np.arange(1, cap + 1, dtype=float)
    pmf = j ** (-a) / zeta(a)
    pmf[-1] = max(0.0, 1.0 - pmf[:-1].sum())
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    cdf.setflags(write=False)
    return cdf


def zipf_pmf(a, cap):
    """Probability of each count 1..cap for ``min(Zipf(a), cap)``."""
    cdf = _zipf_cdf(float(a), int(cap))
    return np.diff(cdf, prepend=0.0)


def truncated_zipf(rng, a, cap, size):
    """Sample ``min(Zipf(a), cap)`` by inversion; ``cap`` may be an array broadcast to ``size``."""
    cap_arr = np.asarray(cap, dtype=np.int64)
    top = int(cap_arr.max())
    if top < 1:
        return np.zeros(size, dtype=np.int64)
    cdf = _zipf_cdf(float(a), top)
    u = rng.random(size)
    draws = cdf.searchsorted(u, side="right")
    draws += 1
    np.minimum(draws, top, out=draws)
    # a single cap is ``top`` itself
    return draws if cap_arr.size == 1 else np.minimum(draws, cap_arr)
