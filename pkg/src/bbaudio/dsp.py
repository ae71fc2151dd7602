"""Mutation-noise generation, highpass filtering and waveform similarity."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audio_io import AudioBuffer

BUTTERWORTH_Q = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class BiquadCoeffs:
    """Second-order section, a0 normalized to 1."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    @property
    def b(self) -> np.ndarray:
        return np.array([self.b0, self.b1, self.b2])

    @property
    def a(self) -> np.ndarray:
        return np.array([1.0, self.a1, self.a2])

    def poles(self) -> np.ndarray:
        return np.roots(self.a)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def frequency_response(self, freq, sample_rate: float):
        """Complex H(e^{jw}) evaluated at ``freq`` Hz."""
        w = 2.0 * np.pi * np.asarray(freq, dtype=np.float64) / sample_rate
        z1 = np.exp(-1j * w)
        z2 = z1 * z1
        return (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)

    def gain_db(self, freq, sample_rate: float):
        mag = np.abs(self.frequency_response(freq, sample_rate))
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(mag)


@dataclass(frozen=True)
class NoiseConfig:
    mu: float = 0.0
    sigma: float = 40.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def design_highpass(sample_rate: float, cutoff: float) -> BiquadCoeffs:
    """Second-order Butterworth highpass with its -3 dB point at ``cutoff``.

    Bilinear transform with frequency prewarping (the RBJ cookbook form
    with Q = 1/sqrt(2)).
    """
    if not 0 < cutoff < sample_rate / 2:
        raise ValueError(
            f"cutoff {cutoff} Hz must lie strictly between 0 and Nyquist ({sample_rate / 2} Hz)")
    w0 = 2.0 * math.pi * cutoff / sample_rate
    cw = math.cos(w0)
    alpha = math.sin(w0) / (2.0 * BUTTERWORTH_Q)
    a0 = 1.0 + alpha
    return BiquadCoeffs(
        b0=(1.0 + cw) / 2.0 / a0,
        b1=-(1.0 + cw) / a0,
        b2=(1.0 + cw) / 2.0 / a0,
        a1=-2.0 * cw / a0,
        a2=(1.0 - alpha) / a0,
    )


def apply_filter(coeffs: BiquadCoeffs, signal) -> np.ndarray:
    """Run the difference equation over ``signal`` from a zero initial state."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    return lfilter(coeffs.b, coeffs.a, x)


def sample_noise(n: int, cfg: NoiseConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw ``n`` i.i.d. N(mu, sigma^2) values.

    When ``rng`` is omitted a generator seeded from ``cfg.seed`` is used.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if cfg.sigma == 0:
        return np.full(n, float(cfg.mu))
    return rng.normal(cfg.mu, cfg.sigma, size=n)


def _as_array(x) -> np.ndarray:
    if isinstance(x, AudioBuffer):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def cross_correlation(a, b) -> float:
    """Zero-lag normalized cross-correlation coefficient of two waveforms."""
    x = _as_array(a)
    y = _as_array(b)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise ValueError("need at least two samples")
    xc = x - x.mean()
    yc = y - y.mean()
    nx = np.linalg.norm(xc)
    ny = np.linalg.norm(yc)
    if nx == 0 or ny == 0:
        raise ValueError("correlation undefined for a constant signal")
    r = float(np.dot(xc, yc) / (nx * ny))
    return max(-1.0, min(1.0, r))
