"""Simulation of a two-submarket auction that sells digital-twin synchronization
and generative AR display time at a roadside unit."""

from .errors import (
    ConfigError,
    DegenerateMarketError,
    DomainError,
    InfeasibleLinkError,
    MechanismFailure,
    NoMarketError,
    PvsyncError,
)
from .market import Scenario, ScenarioConfig, load_config, sample_scenario, validate_scenario
from .mechanism import (
    AuctionOutcome,
    BidSet,
    run_epvisa,
    run_mtepvisa,
    run_pvisa,
    truthful_bids,
)

__version__ = "0.1.0"
