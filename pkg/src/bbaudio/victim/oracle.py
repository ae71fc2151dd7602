"""The black-box boundary: (audio, target) -> (CTC loss, greedy transcript)."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from ..audio_io import AudioBuffer


@dataclass(frozen=True)
class OracleResponse:
    loss: float
    transcript: str

    @property
    def score(self) -> float:
        """The attack's fitness, -loss."""
        return -self.loss

    @property
    def reachable(self) -> bool:
        return math.isfinite(self.loss)


class OracleError(Exception):
    """An oracle call failed. ``retryable`` says whether repeating it may help."""

    retryable = False

    def __init__(self, message: str, *, index: int | None = None):
        super().__init__(message)
        self.index = index


class RemoteError(OracleError):
    """Remote oracle answered with a non-200 status."""

    def __init__(self, status: int, body: str = "", **kw):
        super().__init__(f"oracle returned HTTP {status}: {body[:200]}", **kw)
        self.status = status
        self.retryable = status >= 500 or status == 429


class ProtocolError(OracleError):
    """Response body could not be understood."""


class OracleTimeout(OracleError):
    retryable = True


class OracleConnectionError(OracleError):
    retryable = True


@runtime_checkable
class Oracle(Protocol):
    def score(self, audio: AudioBuffer, target: str) -> OracleResponse: ...


def score_all(oracle: Oracle, audios: Sequence[AudioBuffer], target: str,
              workers: int = 1) -> list[OracleResponse]:
    """Score every buffer, results in input order.

    Uses the oracle's own ``score_batch`` when it has one; otherwise fans
    out ``score`` calls over ``workers`` threads. A failing call is
    re-raised with its position recorded in ``exc.index``.
    """
    batch = getattr(oracle, "score_batch", None)
    if batch is not None:
        return list(batch(audios, target))

    def one(i: int) -> OracleResponse:
        try:
            return oracle.score(audios[i], target)
        except OracleError as exc:
            if exc.index is None:
                exc.index = i
            raise
        except Exception as exc:
            raise OracleError(f"oracle call {i} failed: {exc!r}", index=i) from exc

    if workers <= 1 or len(audios) <= 1:
        return [one(i) for i in range(len(audios))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(len(audios))))
