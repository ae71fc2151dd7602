"""Seeded speech-like clips and reachable targets for exercising the toy victim."""
from __future__ import annotations

import numpy as np

from .attack import AttackConfig
from .audio_io import AudioBuffer, DEFAULT_SAMPLE_RATE
from .dsp import NoiseConfig, apply_filter, cross_correlation, design_highpass
from .victim import ToyVictim, ToyVictimParams

# Desk-scale regression scenario. Seeds 1-10 are the first ten seeds with a
# reachable 3-character target (seed 0 has none). The attack settings were
# fixed once by running the finished system; see desk_scale_case.
DESK_SCALE_SEEDS = tuple(range(1, 11))
DESK_SCALE_OVERRIDES = dict(population_size=16, noise=NoiseConfig(sigma=100.0), fd_step=1e8)


def speech_like_clip(seed: int, duration: float = 1.0, sample_rate: int = DEFAULT_SAMPLE_RATE,
                     rms: float = 3000.0) -> AudioBuffer:
    """Voiced harmonic tone with a syllable-rate envelope and a little breath noise.

    Pitch, formant weights and envelope phase come from ``seed``; the result
    is scaled to the requested RMS in 16-bit units.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = rng.uniform(90.0, 240.0)
    vibrato = 1.0 + 0.02 * np.sin(2 * np.pi * rng.uniform(3.0, 6.0) * t)
    phase = 2 * np.pi * f0 * np.cumsum(vibrato) / sample_rate
    voiced = np.zeros(n)
    for k in range(1, 30):
        if k * f0 >= sample_rate / 2:
            break
        voiced += rng.uniform(0.2, 1.0) / k * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    syllable_rate = rng.uniform(3.0, 5.0)
    envelope = 0.15 + 0.85 * np.clip(np.sin(2 * np.pi * syllable_rate * t + rng.uniform(0, 2 * np.pi)), 0, None)
    signal = voiced * envelope + 0.05 * rng.standard_normal(n)
    signal *= rms / np.sqrt(np.mean(signal ** 2))
    return AudioBuffer(np.clip(np.rint(signal), -32768, 32767), sample_rate)


def reachable_target(oracle, x: AudioBuffer, seed: int, length: int = 3,
                     levels=(200.0, 400.0, 600.0, 750.0), tries: int = 60,
                     min_correlation: float = 0.97) -> str:
    """A ``length``-character phrase the oracle outputs for ``x`` plus some
    random highpass noise of RMS ``level`` (16-bit units).

    Such a phrase is reachable by construction: a perturbation with
    correlation at least ``min_correlation`` produces it. Levels are tried
    in increasing order and the first qualifying transcript wins, so the
    target sits as close to ``x`` as this search can place it. Only the
    oracle's transcripts are used.
    """
    rng = np.random.default_rng(seed)
    hp = design_highpass(x.sample_rate, 7000.0)
    original = oracle.score(x, "a").transcript
    for level in sorted(levels):
        for _ in range(tries):
            noise = apply_filter(hp, rng.standard_normal(len(x)))
            noise *= level / np.sqrt(np.mean(noise ** 2))
            y = AudioBuffer(x.samples + noise, x.sample_rate)
            if cross_correlation(x, y) < min_correlation:
                continue
            text = oracle.score(y, "a").transcript
            if len(text) == length and " " not in text and text != original:
                return text
    raise ValueError(f"no reachable {length}-character target found for seed {seed}")


def desk_scale_case(seed: int) -> tuple[ToyVictim, AudioBuffer, str, AttackConfig]:
    """(victim, 1 s clip, 3-character reachable target, attack config) for one seed."""
    victim = ToyVictim(ToyVictimParams(seed=seed))
    x = speech_like_clip(seed)
    target = reachable_target(victim, x, seed)
    return victim, x, target, AttackConfig(seed=seed, **DESK_SCALE_OVERRIDES)
