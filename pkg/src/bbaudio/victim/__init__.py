"""Black-box oracles: the toy victim, the HTTP adapter and the shared interface."""
from .oracle import (Oracle, OracleConnectionError, OracleError, OracleResponse, OracleTimeout,
                     ProtocolError, RemoteError, score_all)
from .remote import BackgroundServer, HttpOracle, make_server
from .toy import ToyVictim, ToyVictimParams, toy_forward

__all__ = [
    "Oracle", "OracleResponse", "OracleError", "RemoteError", "ProtocolError", "OracleTimeout",
    "OracleConnectionError", "score_all", "HttpOracle", "make_server", "BackgroundServer",
    "ToyVictim", "ToyVictimParams", "toy_forward",
]
