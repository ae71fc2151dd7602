"""Output alphabet, CTC collapse, forward-algorithm likelihood and greedy decoding.

The blank symbol (epsilon) is always the last column of a logit matrix.
With the default 28-symbol alphabet that is index 27; restricted alphabets
used in tests follow the same convention unless ``blank`` is passed.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.special import logsumexp

BLANK_SYMBOL = "ε"
ALPHABET: tuple[str, ...] = tuple("abcdefghijklmnopqrstuvwxyz ") + (BLANK_SYMBOL,)
BLANK = len(ALPHABET) - 1
NUM_SYMBOLS = len(ALPHABET)
_INDEX = {s: i for i, s in enumerate(ALPHABET)}

# 28**4 paths; anything larger is refused by the brute-force oracle.
MAX_BRUTE_FORCE_PATHS = NUM_SYMBOLS ** 4

Target = Union[str, Sequence[int]]


class InstanceTooLarge(ValueError):
    pass


def validate_phrase(text: str) -> str:
    """Return ``text`` if it only uses a-z and space, else raise ValueError."""
    if not isinstance(text, str):
        raise TypeError(f"phrase must be a str, got {type(text).__name__}")
    bad = sorted({c for c in text if c not in _INDEX or c == BLANK_SYMBOL})
    if bad:
        raise ValueError(f"phrase {text!r} contains characters outside a-z and space: {bad}")
    return text


def encode(text: str) -> list[int]:
    return [_INDEX[c] for c in validate_phrase(text)]


def decode_indices(indices: Iterable[int]) -> str:
    return "".join(ALPHABET[i] for i in indices)


def _symbol_index(sym, n_symbols: int) -> int:
    if isinstance(sym, (int, np.integer)):
        if not 0 <= sym < n_symbols:
            raise ValueError(f"symbol index {sym} outside alphabet of size {n_symbols}")
        return int(sym)
    if sym in _INDEX:
        return _INDEX[sym]
    raise ValueError(f"symbol {sym!r} is not in the alphabet")


def collapse_indices(path: Iterable[int], blank: int = BLANK) -> tuple[int, ...]:
    """Merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for s in path:
        if s != prev and s != blank:
            out.append(s)
        prev = s
    return tuple(out)


def collapse(seq) -> str:
    """Collapse an alignment (symbols or alphabet indices) to its phrase.

    >>> collapse(["a", "a", "b", "ε", "ε", "b"])
    'abb'
    """
    idx = [_symbol_index(s, NUM_SYMBOLS) for s in seq]
    return decode_indices(collapse_indices(idx, BLANK))


def _labels(target: Target, n_symbols: int, blank: int) -> list[int]:
    if isinstance(target, str):
        labels = encode(target)
    else:
        labels = [int(t) for t in target]
    for lab in labels:
        if not 0 <= lab < n_symbols or lab == blank:
            raise ValueError(f"label {lab} is not a non-blank symbol")
    return labels


def min_frames(labels: Sequence[int]) -> int:
    """Shortest alignment length: one frame per label plus a blank between repeats."""
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _forward_batch(logprobs: np.ndarray, labels: list[int], blank: int) -> np.ndarray:
    """Log-space CTC forward recursion for a (B, T, V) stack; returns (B,)."""
    B, T, _ = logprobs.shape
    if min_frames(labels) > T:
        return np.full(B, -np.inf)
    ext = [blank]
    for lab in labels:
        ext += [lab, blank]
    ext = np.array(ext)
    S = ext.shape[0]
    skip = np.zeros(S, dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    emit = logprobs[:, :, ext]  # (B, T, S)
    alpha = np.full((B, S), -np.inf)
    alpha[:, 0] = emit[:, 0, 0]
    if S > 1:
        alpha[:, 1] = emit[:, 0, 1]
    prev1 = np.full((B, S), -np.inf)
    prev2 = np.full((B, S), -np.inf)
    for t in range(1, T):
        prev1[:, 1:] = alpha[:, :-1]
        prev2[:, skip] = alpha[:, :-2][:, skip[2:]]
        alpha = np.logaddexp(np.logaddexp(alpha, prev1), prev2) + emit[:, t, :]
    if S == 1:
        return alpha[:, 0]
    return np.logaddexp(alpha[:, -1], alpha[:, -2])


def _check_logprobs(logprobs: np.ndarray) -> np.ndarray:
    lp = np.asarray(logprobs, dtype=np.float64)
    if lp.ndim != 2 or lp.shape[0] < 1:
        raise ValueError(f"expected a (T, V) matrix with T >= 1, got shape {lp.shape}")
    norms = logsumexp(lp, axis=1)
    if np.any(np.abs(norms) > 1e-6):
        raise ValueError("rows of logprobs must be normalized log-distributions")
    return lp


def ctc_log_likelihood(logprobs, target: Target, blank: int | None = None) -> float:
    """log Pr(target | y): sum over all alignments collapsing to ``target``.

    ``logprobs`` is a (T, V) matrix of per-frame log-probabilities. Returns
    ``-inf`` when the target needs more frames than are available.
    """
    lp = _check_logprobs(logprobs)
    blank = lp.shape[1] - 1 if blank is None else blank
    labels = _labels(target, lp.shape[1], blank)
    return float(_forward_batch(lp[None], labels, blank)[0])


@lru_cache(maxsize=64)
def _path_table(n_symbols: int, frames: int, blank: int):
    paths = np.array(list(itertools.product(range(n_symbols), repeat=frames)), dtype=np.int64)
    groups: dict[tuple[int, ...], list[int]] = {}
    for i, p in enumerate(paths.tolist()):
        groups.setdefault(collapse_indices(p, blank), []).append(i)
    return paths, {k: np.array(v) for k, v in groups.items()}


def brute_force_log_likelihood(logprobs, target: Target, blank: int | None = None) -> float:
    """Exact log-sum over every length-T path whose collapse equals ``target``.

    Enumerates all V**T paths; only for tiny instances (verification oracle).
    """
    lp = np.asarray(logprobs, dtype=np.float64)
    T, V = lp.shape
    if V ** T > MAX_BRUTE_FORCE_PATHS:
        raise InstanceTooLarge(f"{V}**{T} paths exceeds the enumeration limit")
    blank = V - 1 if blank is None else blank
    labels = tuple(_labels(target, V, blank))
    paths, groups = _path_table(V, T, blank)
    members = groups.get(labels)
    if members is None:
        return -math.inf
    path_lp = lp[np.arange(T), paths[members]].sum(axis=1)
    return float(logsumexp(path_lp))


def ctc_loss(logits, target: Target, blank: int | None = None) -> float:
    """Negative log-likelihood of ``target`` under row-wise softmax(logits)."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    return -ctc_log_likelihood(log_softmax(z), target, blank)


def ctc_loss_batch(logits: np.ndarray, target: Target, blank: int | None = None) -> np.ndarray:
    """Vectorized ``ctc_loss`` over a (B, T, V) stack."""
    z = np.asarray(logits, dtype=np.float64)
    blank = z.shape[-1] - 1 if blank is None else blank
    labels = _labels(target, z.shape[-1], blank)
    return -_forward_batch(log_softmax(z), labels, blank)


def best_path(logits) -> np.ndarray:
    # np.argmax returns the first maximum: ties go to the lowest index
    return np.argmax(np.asarray(logits), axis=-1)


def greedy_decode(logits, blank: int | None = None) -> str:
    """Per-frame argmax followed by collapse."""
    z = np.asarray(logits, dtype=np.float64)
    blank = z.shape[-1] - 1 if blank is None else blank
    return decode_indices(collapse_indices(best_path(z).tolist(), blank))


def greedy_decode_batch(logits: np.ndarray) -> list[str]:
    paths = best_path(logits)
    blank = np.shape(logits)[-1] - 1
    return [decode_indices(collapse_indices(p, blank)) for p in paths.tolist()]
