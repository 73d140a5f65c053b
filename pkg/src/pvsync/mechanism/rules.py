"""Scoring, allocation and pricing rules for the two submarkets.

Ties always go to the lowest entity index. In the virtual submarket an
infotainment MAR clears only on a strict inequality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ConfigError, NoMarketError

NO_WINNER = -1


@dataclass(frozen=True)
class Bid:
    bidder: int
    price_o: float
    deadlines_d: tuple = ()

    def __post_init__(self):
        if self.price_o < 0:
            raise ValueError(f"bid price must be >= 0, got {self.price_o}")
        if any(d <= 0 for d in self.deadlines_d):
            raise ValueError("bid deadlines must be > 0")


@dataclass(frozen=True)
class ScoreBoard:
    physical_scores: np.ndarray
    virtual_scaled_bids: Optional[np.ndarray] = None
    alpha: float = 1.0
    eligible: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


def check_penalty(phi: Callable, dim: int, grid=np.linspace(0.0, 5.0, 21)):
    """Probe ``phi`` for ``phi(0) == 0`` and monotonicity along each axis and the diagonal."""
    zero = np.zeros(dim)
    if phi(zero) != 0:
        raise ConfigError(f"deadline penalty must vanish at 0, got phi(0)={phi(zero)}")
    directions = [np.ones(dim)] + [np.eye(dim)[a] for a in range(dim)]
    for direction in directions:
        vals = [phi(t * direction) for t in grid]
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise ConfigError("deadline penalty must be non-decreasing")


def sync_score(bid: Bid, phi: Callable, probe: bool = True) -> float:
    """General scoring rule: offered price minus a deadline penalty."""
    d = np.asarray(bid.deadlines_d, dtype=float)
    if probe:
        check_penalty(phi, d.size)
    return float(bid.price_o - phi(d))


def efficient_score(price, virtual_surplus_estimate):
    """Offered DT price plus the expected duration-weighted MAR surplus it unlocks."""
    if np.any(np.asarray(virtual_surplus_estimate) < 0):
        raise ValueError("virtual surplus estimate must be >= 0")
    return price + virtual_surplus_estimate


# ---------------------------------------------------------------------------
# Physical submarket
# ---------------------------------------------------------------------------


def allocate_physical(scores, eligible=None) -> int:
    """Index of the highest score; ties to the lowest index."""
    scores = np.asarray(scores, dtype=float)
    if eligible is not None:
        scores = np.where(eligible, scores, -np.inf)
        if not np.any(eligible):
            raise NoMarketError("no eligible physical bidders")
    if scores.size == 0:
        raise NoMarketError("no physical bidders")
    return int(np.argmax(scores))


def _runner_up(scores, winner, eligible):
    others = np.where(eligible, scores, -np.inf).copy()
    others[winner] = -np.inf
    if not np.isfinite(others).any():
        return None
    return int(np.argmax(others))


def price_physical(bids, scores, winner, rule="second_score", eligible=None, reserve=0.0,
                   offsets=None) -> float:
    """Payment of the physical winner.

    ``second_score``: the bid at which the winner's score would tie the
    runner-up's score, i.e. ``score_2nd - (score_w - bid_w)``, floored at the
    reserve. ``runner_up_bid``: the raw bid of the runner-up.

    ``offsets`` gives the non-price part of each score (``score - bid``)
    directly; passing it keeps the payment bit-for-bit independent of the
    winner's own bid.
    """
    bids = np.asarray(bids, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if eligible is None:
        eligible = np.ones(scores.shape, dtype=bool)
    r = _runner_up(scores, winner, eligible)
    if r is None:
        return float(reserve)
    if rule == "runner_up_bid":
        return float(bids[r])
    if rule == "second_score":
        offset = scores[winner] - bids[winner] if offsets is None else offsets[winner]
        return float(max(reserve, scores[r] - offset))
    raise ValueError(f"unknown physical pricing rule {rule!r}")


# ---------------------------------------------------------------------------
# Virtual submarket
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VirtualClearing:
    winner: np.ndarray  # index per row, NO_WINNER when nobody clears
    rate: np.ndarray  # price per unit display time


def clear_virtual(bids, eligible, alpha, functional=0, include_functional=False, pricing="scaled"):
    """Clear one or many virtual submarkets at once.

    ``bids`` and ``eligible`` are (..., K). The top infotainment bidder wins
    iff its bid strictly exceeds ``alpha`` times the best competing bid (other
    infotainment bids, plus the functional bid when ``include_functional``);
    otherwise the functional MAR gets the slot if eligible.

    ``pricing``: ``scaled`` charges the infotainment winner ``alpha`` times the
    competing bid and the functional MAR its own bid; ``first_price`` charges
    every winner its own bid; ``second_price`` ignores ``alpha`` and the
    functional role entirely and runs a plain second-price auction.
    """
    bids = np.asarray(bids, dtype=float)
    eligible = np.asarray(eligible, dtype=bool)
    if bids.ndim == 1 and np.ndim(alpha) == 0:
        return _clear_one(bids, eligible, float(alpha), functional, include_functional, pricing)
    lead = bids.shape[:-1]
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), lead)
    b = np.where(eligible, bids, -np.inf)

    if pricing == "second_price":
        winner = np.argmax(b, axis=-1)
        top = np.take_along_axis(b, winner[..., None], -1)[..., 0]
        rest = b.copy()
        np.put_along_axis(rest, winner[..., None], -np.inf, -1)
        second = np.max(rest, axis=-1)
        winner = np.where(np.isfinite(top), winner, NO_WINNER)
        rate = np.where(np.isfinite(second), second, 0.0)
        return VirtualClearing(winner, np.where(winner >= 0, rate, 0.0))

    info = b.copy()
    if functional is None:
        include_functional = False
    else:
        info[..., functional] = -np.inf
    top_idx = np.argmax(info, axis=-1)
    top = np.take_along_axis(info, top_idx[..., None], -1)[..., 0]
    np.put_along_axis(info, top_idx[..., None], -np.inf, -1)
    competitor = np.max(info, axis=-1)
    if include_functional:
        competitor = np.maximum(competitor, b[..., functional])
    competitor = np.where(np.isfinite(competitor), competitor, 0.0)

    info_wins = np.isfinite(top) & (top > alpha * competitor)
    func_ok = eligible[..., functional] if functional is not None else False
    fallback = functional if functional is not None else NO_WINNER
    winner = np.where(info_wins, top_idx, np.where(func_ok, fallback, NO_WINNER))
    own = np.take_along_axis(bids, np.maximum(winner, 0)[..., None], -1)[..., 0]
    if pricing == "first_price":
        rate = own
    elif pricing == "scaled":
        rate = np.where(info_wins, alpha * competitor, own)
    else:
        raise ValueError(f"unknown virtual pricing {pricing!r}")
    return VirtualClearing(winner, np.where(winner >= 0, rate, 0.0))


def _clear_one(bids, eligible, alpha, functional, include_functional, pricing):
    """Single-market version of :func:`clear_virtual`; same tie and strictness rules."""
    b = np.where(eligible, bids, -np.inf)
    if pricing == "second_price":
        w = int(np.argmax(b))
        if not np.isfinite(b[w]):
            return VirtualClearing(np.int64(NO_WINNER), np.float64(0.0))
        b[w] = -np.inf
        second = b.max()
        return VirtualClearing(np.int64(w), np.float64(second if np.isfinite(second) else 0.0))
    if pricing not in ("scaled", "first_price"):
        raise ValueError(f"unknown virtual pricing {pricing!r}")
    info = b.copy()
    if functional is not None:
        info[functional] = -np.inf
    top_idx = int(np.argmax(info))
    top = info[top_idx]
    info[top_idx] = -np.inf
    comp = info.max()
    if include_functional and functional is not None:
        comp = max(comp, b[functional])
    if not np.isfinite(comp):
        comp = 0.0
    if np.isfinite(top) and top > alpha * comp:
        rate = alpha * comp if pricing == "scaled" else bids[top_idx]
        return VirtualClearing(np.int64(top_idx), np.float64(rate))
    if functional is not None and eligible[functional]:
        return VirtualClearing(np.int64(functional), np.float64(bids[functional]))
    return VirtualClearing(np.int64(NO_WINNER), np.float64(0.0))


def allocate_virtual(bids: Sequence[float], alpha: float, functional: int = 0,
                     include_functional: bool = False, eligible=None) -> Optional[int]:
    """Winner of the virtual submarket, or ``None`` if the slot goes unfilled."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    bids = np.asarray(bids, dtype=float)
    if bids.size == 0:
        raise NoMarketError("empty MAR roster")
    if eligible is None:
        eligible = np.ones(bids.shape, dtype=bool)
    w = int(clear_virtual(bids, eligible, alpha, functional, include_functional).winner)
    return None if w == NO_WINNER else w


def price_virtual(bids, alpha, winner, display_duration, functional=0, include_functional=False,
                  eligible=None) -> float:
    """Cost-per-time payment: display duration times the winner's rate."""
    if display_duration < 0:
        raise ValueError("display duration must be >= 0")
    if winner is None:
        return 0.0
    bids = np.asarray(bids, dtype=float)
    if eligible is None:
        eligible = np.ones(bids.shape, dtype=bool)
    if winner == functional:
        return float(display_duration * bids[functional])
    others = np.where(eligible, bids, -np.inf).copy()
    others[winner] = -np.inf
    if not include_functional:
        others[functional] = -np.inf
    comp = others.max() if np.isfinite(others).any() else 0.0
    return float(display_duration * alpha * comp)
