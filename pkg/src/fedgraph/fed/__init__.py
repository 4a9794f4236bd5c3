"""Federated training: wire format, transports and the aggregator/party protocol."""

from .protocol import (
    Aggregation,
    FedConfig,
    FedResult,
    PartyData,
    RoundLog,
    Transport,
    aggregate,
    centralized_equivalent,
    run_aggregator,
    run_party,
    simulate,
)
from .wire import decode_message, encode_message

__all__ = [
    "Aggregation",
    "FedConfig",
    "FedResult",
    "PartyData",
    "RoundLog",
    "Transport",
    "aggregate",
    "centralized_equivalent",
    "decode_message",
    "encode_message",
    "run_aggregator",
    "run_party",
    "simulate",
]
