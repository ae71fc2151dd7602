"""A small deterministic speech-to-text stand-in.

Each non-overlapping 20 ms window is mean-removed, projected to a hidden
layer, squashed with tanh and mapped to 28 logits. Weights are random,
fixed by the seed, and never trained; the model only has to be a
nonlinear black box with a CTC output head.

Input is quantized to int16 first, the way a real recognizer reads PCM.
That keeps the in-process model and the HTTP wire format (int16) in exact
agreement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..audio_io import PCM_MAX, PCM_MIN, AudioBuffer
from ..ctc import NUM_SYMBOLS, BLANK, ctc_loss_batch, greedy_decode_batch, validate_phrase
from .oracle import OracleError, OracleResponse

# First-layer weights are rounded to multiples of 2**-24. With int16 inputs
# every product and every partial sum of a 320-tap dot product is then an
# exact float64, so batched and single-item evaluation agree bit for bit.
_WEIGHT_QUANTUM = 2.0 ** -24


@dataclass(frozen=True)
class ToyVictimParams:
    seed: int = 0
    frame_len: int = 320
    hop: int = 320
    hidden_dim: int = 32
    input_scale: float = 2.0 ** -12
    blank_bias: float = 2.0

    def __post_init__(self):
        if self.hop <= 0:
            raise ValueError("hop must be positive")
        if self.frame_len < self.hop:
            raise ValueError("frame_len must be >= hop")
        if self.hidden_dim <= 0:
            raise ValueError("hidden_dim must be positive")
        mant, _ = math.frexp(self.input_scale)
        if self.input_scale <= 0 or mant != 0.5:
            raise ValueError("input_scale must be a positive power of two")

    def num_frames(self, n_samples: int) -> int:
        if n_samples < self.frame_len:
            return 0
        return (n_samples - self.frame_len) // self.hop + 1


class _Weights:
    def __init__(self, p: ToyVictimParams):
        rng = np.random.default_rng(p.seed)
        w1 = rng.standard_normal((p.hidden_dim, p.frame_len)) / math.sqrt(p.frame_len)
        # Removing the window mean before projecting equals projecting with
        # row-centred weights.
        w1 -= w1.mean(axis=1, keepdims=True)
        self.w1 = np.round(w1 / _WEIGHT_QUANTUM) * _WEIGHT_QUANTUM
        self.b1 = rng.standard_normal(p.hidden_dim) / math.sqrt(p.frame_len)
        self.w2 = rng.standard_normal((NUM_SYMBOLS, p.hidden_dim)) / math.sqrt(p.hidden_dim)
        self.b2 = rng.standard_normal(NUM_SYMBOLS) / math.sqrt(p.hidden_dim)
        self.b2[BLANK] += p.blank_bias


def _frames(pcm: np.ndarray, p: ToyVictimParams) -> np.ndarray:
    """(B, L) -> (B, T, frame_len)."""
    T = p.num_frames(pcm.shape[-1])
    if p.hop == p.frame_len:
        return pcm[:, :T * p.hop].reshape(pcm.shape[0], T, p.frame_len)
    win = np.lib.stride_tricks.sliding_window_view(pcm, p.frame_len, axis=-1)
    return win[:, ::p.hop][:, :T]


class ToyVictim:
    """Local oracle wrapping the toy model. Stateless after construction."""

    def __init__(self, params: ToyVictimParams | None = None):
        self.params = params or ToyVictimParams()
        self._w = _Weights(self.params)

    def forward_batch(self, samples: np.ndarray) -> np.ndarray:
        """Logits for a (B, L) stack of equal-length clips: (B, T, 28)."""
        p = self.params
        x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        if x.shape[-1] < p.frame_len:
            raise OracleError(
                f"audio of {x.shape[-1]} samples is shorter than one frame ({p.frame_len})")
        pcm = np.rint(x)
        np.clip(pcm, PCM_MIN, PCM_MAX, out=pcm)
        frames = _frames(pcm, p)
        pre = (frames @ self._w.w1.T) * p.input_scale + self._w.b1
        hidden = np.tanh(pre)
        # Fixed-order accumulation keeps each row's rounding independent of
        # the batch size (a BLAS call would not guarantee that).
        logits = np.broadcast_to(self._w.b2, hidden.shape[:-1] + (NUM_SYMBOLS,)).copy()
        for j in range(p.hidden_dim):
            logits += hidden[..., j:j + 1] * self._w.w2[:, j]
        return logits

    def forward(self, audio: AudioBuffer) -> np.ndarray:
        return self.forward_batch(audio.samples[None])[0]

    def score_batch(self, audios, target: str) -> list[OracleResponse]:
        validate_phrase(target)
        if len(audios) == 0:
            return []
        lengths = {len(a) for a in audios}
        if len(lengths) != 1:
            return [r for a in audios for r in self.score_batch([a], target)]
        logits = self.forward_batch(np.stack([a.samples for a in audios]))
        losses = ctc_loss_batch(logits, target)
        texts = greedy_decode_batch(logits)
        return [OracleResponse(float(l), t) for l, t in zip(losses, texts)]

    def score(self, audio: AudioBuffer, target: str) -> OracleResponse:
        return self.score_batch([audio], target)[0]


def toy_forward(audio: AudioBuffer, params: ToyVictimParams) -> np.ndarray:
    """Logit matrix (T, 28) of the toy model for one clip."""
    return ToyVictim(params).forward(audio)
