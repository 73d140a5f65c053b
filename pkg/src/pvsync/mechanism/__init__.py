"""Two-submarket synchronization auctions."""

from .auction import (
    DEFAULT_MC_SAMPLES,
    MECHANISMS,
    EPViSA,
    FirstPriceControl,
    AuctionOutcome,
    BidSet,
    MarketState,
    Mechanism,
    MTEPViSA,
    PViSA,
    get_mechanism,
    ir_violations,
    run_epvisa,
    run_mtepvisa,
    run_pvisa,
    social_surplus,
    truthful_bids,
)
from .estimates import (
    estimate_virtual_surplus,
    functional_expected_value,
    price_scaling_factor,
    scaling_factor,
)
from .rules import (
    NO_WINNER,
    Bid,
    ScoreBoard,
    allocate_physical,
    allocate_virtual,
    clear_virtual,
    efficient_score,
    price_physical,
    price_virtual,
    sync_score,
)
