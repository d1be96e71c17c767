"""Minimum-power operating points for cell-free massive MIMO downlinks."""

from . import (  # noqa: F401
    bnb,
    formulations,
    harness,
    heuristics,
    network,
    performance,
    socp,
)

__all__ = ["bnb", "formulations", "harness", "heuristics", "network",
           "performance", "socp"]
