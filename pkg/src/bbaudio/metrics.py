"""Attack-quality measures: edit distance and the target-similarity ratio."""
from __future__ import annotations

from dataclasses import dataclass


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute distance between two strings."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1,
                           cur[j - 1] + 1,
                           prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def target_similarity(decoded: str, target: str, original_decoded: str) -> float:
    """1 - Levenshtein(decoded, target) / len(original_decoded), floored at 0.

    The denominator is the length of the transcription of the *unperturbed*
    audio, not of the target.
    """
    if len(original_decoded) == 0:
        raise ValueError("original transcription is empty; similarity undefined")
    return max(0.0, 1.0 - levenshtein(decoded, target) / len(original_decoded))


@dataclass(frozen=True)
class SimilarityReport:
    levenshtein: int
    target_similarity: float
    audio_correlation: float


def similarity_report(decoded: str, target: str, original_decoded: str,
                      audio_correlation: float) -> SimilarityReport:
    return SimilarityReport(
        levenshtein=levenshtein(decoded, target),
        target_similarity=target_similarity(decoded, target, original_decoded),
        audio_correlation=audio_correlation,
    )
