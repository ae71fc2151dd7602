"""Two-phase black-box attack: genetic search with momentum mutation, then
coordinate-wise finite-difference gradient steps once the transcript is
within a small edit distance of the target.

The engine only talks to an oracle through ``score``/``score_batch``; it
never sees logits.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .audio_io import AudioBuffer
from .ctc import validate_phrase
from .dsp import BiquadCoeffs, NoiseConfig, apply_filter, cross_correlation, design_highpass, sample_noise
from .metrics import levenshtein
from .victim.oracle import Oracle, OracleError, OracleResponse, score_all

log = logging.getLogger(__name__)

HIGHPASS_CUTOFF_HZ = 7000.0

GENETIC = "genetic"
GRADIENT = "gradient"

# Stream tag for the gradient phase's index sampling; member streams use
# indices 0..population_size-1.
_GRADIENT_STREAM = 2 ** 31 - 1


@dataclass(frozen=True)
class AttackConfig:
    population_size: int = 100
    max_iters: int = 3000
    elite_frac: float = 0.1
    phase_switch_edit_distance: int = 2
    mutation_p_init: float = 0.005
    alpha: float = 0.99
    beta: float = 0.001
    p_max: float = 0.1
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    fd_indices: int = 100
    fd_delta: float = 1.0
    fd_step: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", NoiseConfig(**self.noise))
        if not 0 < self.elite_frac <= 1:
            raise ValueError("elite_frac must be in (0, 1]")
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if not 0 <= self.mutation_p_init <= self.p_max <= 1:
            raise ValueError("need 0 <= mutation_p_init <= p_max <= 1")
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must be in [0, 1)")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.fd_delta <= 0:
            raise ValueError("fd_delta must be positive")
        if self.fd_indices < 1:
            raise ValueError("fd_indices must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")

    @property
    def elite_size(self) -> int:
        return math.ceil(self.elite_frac * self.population_size)

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Population:
    members: list[AudioBuffer]
    responses: list[OracleResponse] | None = None

    @property
    def scores(self) -> np.ndarray:
        if self.responses is None:
            raise ValueError("population has not been scored")
        return np.array([r.score for r in self.responses])

    @property
    def best_index(self) -> int:
        # argmax returns the first maximum, so ties go to the lowest index
        return int(np.argmax(self.scores))

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True)
class TraceRecord:
    generation: int
    best_score: float
    mutation_p: float
    phase: str
    edit_distance: int
    oracle_calls: int


@dataclass
class AttackResult:
    adversarial: AudioBuffer
    transcript: str
    target: str
    original_transcript: str
    iterations_used: int
    success: bool
    trace: list[TraceRecord]
    correlation: float
    levenshtein: int
    best_loss: float

    def summary(self) -> dict:
        return {
            "target": self.target,
            "transcript": self.transcript,
            "original_transcript": self.original_transcript,
            "iterations_used": self.iterations_used,
            "success": self.success,
            "correlation": self.correlation,
            "levenshtein": self.levenshtein,
            "best_loss": self.best_loss,
        }

    def to_dict(self, include_audio: bool = True) -> dict:
        d = self.summary()
        d["trace"] = [asdict(r) for r in self.trace]
        if include_audio:
            d["sample_rate"] = self.adversarial.sample_rate
            d["adversarial_f64_hex"] = self.adversarial.samples.astype("<f8").tobytes().hex()
        return d

    def to_json(self, include_audio: bool = True) -> str:
        return json.dumps(self.to_dict(include_audio), sort_keys=True)


class AttackAborted(RuntimeError):
    """An oracle failure stopped the run; the trace so far is attached."""

    def __init__(self, message: str, trace: list[TraceRecord], best: AudioBuffer | None):
        super().__init__(message)
        self.trace = trace
        self.best = best


@dataclass(frozen=True)
class SparseGradient:
    """Finite-difference estimate, nonzero only at the sampled indices."""

    length: int
    indices: np.ndarray
    values: np.ndarray

    def to_dense(self) -> np.ndarray:
        g = np.zeros(self.length)
        g[self.indices] = self.values
        return g


def member_rng(seed: int, generation: int, member: int) -> np.random.Generator:
    """Independent stream per (run, generation, member) so results do not
    depend on the order children are produced in."""
    return np.random.default_rng([seed, generation, member])


def initialize_population(x: AudioBuffer, size: int) -> Population:
    if size < 2:
        raise ValueError("population needs at least two members for crossover")
    return Population([x.copy() for _ in range(size)])


def softmax_probs(scores: Sequence[float]) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    finite = np.isfinite(s)
    if not finite.any():
        return np.full(s.shape[0], 1.0 / s.shape[0])
    z = np.where(finite, s - s[finite].max(), -np.inf)
    w = np.exp(z)
    return w / w.sum()


def select_parent(elite_scores: Sequence[float], rng: np.random.Generator) -> int:
    """Index into ``elite_scores`` drawn with probability softmax(scores).

    Candidates scoring -inf are never picked unless every score is -inf,
    in which case the draw is uniform.
    """
    if len(elite_scores) == 0:
        raise ValueError("elite is empty")
    probs = softmax_probs(elite_scores)
    return int(rng.choice(len(probs), p=probs))


def crossover(p1: AudioBuffer, p2: AudioBuffer, rng: np.random.Generator) -> AudioBuffer:
    if len(p1) != len(p2):
        raise ValueError(f"parent length mismatch: {len(p1)} vs {len(p2)}")
    n = len(p1)
    # one fair coin per sample, drawn as packed random bits
    mask = np.unpackbits(rng.integers(0, 256, size=(n + 7) // 8, dtype=np.uint8), count=n).view(bool)
    return AudioBuffer(np.where(mask, p1.samples, p2.samples), p1.sample_rate)


def mutate(x: AudioBuffer, p: float, noise: NoiseConfig, hp: BiquadCoeffs,
           rng: np.random.Generator) -> AudioBuffer:
    """Add highpass-filtered Gaussian noise to each sample with probability ``p``.

    One full-length noise vector is drawn and filtered, so the added
    noise keeps the filter's spectral shape.
    """
    if not 0 <= p <= 1:
        raise ValueError(f"mutation probability {p} outside [0, 1]")
    filtered = apply_filter(hp, sample_noise(len(x), noise, rng))
    mask = rng.random(len(x)) < p
    return AudioBuffer(np.where(mask, x.samples + filtered, x.samples), x.sample_rate)


def momentum_update(p_old: float, new_scores: Sequence[float], old_scores: Sequence[float],
                    alpha: float, beta: float, p_max: float) -> float:
    """p_new = alpha * p_old + beta / |max(new) - max(old)|, clamped to [0, p_max].

    A zero difference (including both maxima -inf) returns ``p_max``.
    """
    if len(new_scores) == 0 or len(old_scores) == 0:
        raise ValueError("score lists must be non-empty")
    curr = max(new_scores)
    prev = max(old_scores)
    if curr == prev:
        return p_max
    if math.isinf(curr - prev):
        return min(max(alpha * p_old, 0.0), p_max)  # beta / inf
    # evaluated exactly and rounded once, so (0.005, 0.99, 0.001, 10)
    # gives the double nearest 0.00505 rather than one ulp above it;
    # clamping first also avoids overflow when |delta| is tiny
    exact = Fraction(alpha) * Fraction(p_old) + Fraction(beta) / abs(Fraction(curr - prev))
    if exact >= Fraction(p_max):
        return p_max
    return max(float(exact), 0.0)


def estimate_gradient(x: AudioBuffer, oracle: Oracle, target: str, indices: Sequence[int],
                      delta: float, base_score: float | None = None,
                      workers: int = 1) -> SparseGradient:
    """Forward differences (score(x + delta*e_i) - score(x)) / delta at ``indices``.

    ``score`` is -CTC loss. Costs ``len(indices)`` oracle calls, plus one
    for the base point unless ``base_score`` is supplied.
    """
    idx = np.asarray(indices, dtype=np.int64)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if idx.size and (idx.min() < 0 or idx.max() >= len(x)):
        raise ValueError("index out of range")
    if np.unique(idx).size != idx.size:
        raise ValueError("indices must be distinct")
    if base_score is None:
        base_score = oracle.score(x, target).score
    if not math.isfinite(base_score):
        raise ValueError("base score is not finite; target unreachable at x")

    probes = []
    for i in idx:
        s = x.samples.copy()
        s[i] += delta
        probes.append(AudioBuffer(s, x.sample_rate))
    responses = score_all(oracle, probes, target, workers)
    values = np.array([(r.score - base_score) / delta for r in responses])
    return SparseGradient(len(x), idx, values)


def gradient_step(x: AudioBuffer, grad: SparseGradient, step: float = 1.0) -> AudioBuffer:
    if not np.all(np.isfinite(grad.values)):
        bad = grad.indices[~np.isfinite(grad.values)]
        raise ValueError(f"non-finite gradient at indices {bad.tolist()}")
    s = x.samples.copy()
    s[grad.indices] += step * grad.values
    return AudioBuffer(s, x.sample_rate)


def _best(pop: Population) -> tuple[AudioBuffer, OracleResponse]:
    i = pop.best_index
    return pop.members[i], pop.responses[i]


def run_attack(x: AudioBuffer, target: str, oracle: Oracle, config: AttackConfig | None = None,
               workers: int = 1,
               on_generation: Callable[[TraceRecord], None] | None = None) -> AttackResult:
    """Search for x' close to ``x`` that ``oracle`` transcribes as ``target``.

    Each generation scores nothing new up front: the population's scores
    are carried over from the previous generation's evaluation. A genetic
    generation makes ``population_size`` oracle calls, a gradient
    generation ``fd_indices + 1``. The best member found so far always
    survives into the next population.
    """
    cfg = config or AttackConfig()
    validate_phrase(target)
    if len(x) == 0:
        raise ValueError("input audio is empty")
    N = cfg.population_size
    hp = design_highpass(x.sample_rate, HIGHPASS_CUTOFF_HZ)
    trace: list[TraceRecord] = []

    pop = initialize_population(x, N)
    try:
        # every member equals x, so one evaluation covers them all
        base = score_all(oracle, [x], target, workers)[0]
    except OracleError as exc:
        raise AttackAborted(f"initial scoring failed: {exc}", trace, None) from exc
    pop.responses = [base] * N
    original_transcript = base.transcript
    p = cfg.mutation_p_init

    for gen in range(cfg.max_iters):
        best, best_resp = _best(pop)
        if best_resp.transcript == target:
            break
        dist = levenshtein(target, best_resp.transcript)
        try:
            if dist > cfg.phase_switch_edit_distance:
                phase = GENETIC
                new_pop = _genetic_generation(pop, cfg, p, hp, gen)
                new_pop.responses = score_all(oracle, new_pop.members, target, workers)
                calls = N
                p_used = p
                p = momentum_update(p, new_pop.scores, pop.scores, cfg.alpha, cfg.beta, cfg.p_max)
            else:
                phase = GRADIENT
                p_used = p
                rng = member_rng(cfg.seed, gen, _GRADIENT_STREAM)
                n_idx = min(cfg.fd_indices, len(x))
                indices = np.sort(rng.choice(len(x), size=n_idx, replace=False))
                grad = estimate_gradient(best, oracle, target, indices, cfg.fd_delta,
                                         base_score=best_resp.score, workers=workers)
                stepped = gradient_step(best, grad, cfg.fd_step)
                stepped_resp = score_all(oracle, [stepped], target, workers)[0]
                new_pop = Population([stepped] + [best] * (N - 1),
                                     [stepped_resp] + [best_resp] * (N - 1))
                calls = n_idx + 1
        except (OracleError, ValueError) as exc:
            raise AttackAborted(f"generation {gen} failed: {exc}", trace, best) from exc

        rec = TraceRecord(gen, float(best_resp.score), float(p_used), phase, dist, calls)
        trace.append(rec)
        if on_generation is not None:
            on_generation(rec)
        if gen % 100 == 0:
            log.debug("gen %d phase=%s score=%.4f dist=%d p=%.5f transcript=%r",
                      gen, phase, best_resp.score, dist, p_used, best_resp.transcript)
        pop = new_pop

    best, best_resp = _best(pop)
    try:
        corr = cross_correlation(x, best)
    except ValueError:
        corr = float("nan")
    return AttackResult(
        adversarial=best,
        transcript=best_resp.transcript,
        target=target,
        original_transcript=original_transcript,
        iterations_used=len(trace),
        success=best_resp.transcript == target,
        trace=trace,
        correlation=corr,
        levenshtein=levenshtein(best_resp.transcript, target),
        best_loss=float(best_resp.loss),
    )


def _genetic_generation(pop: Population, cfg: AttackConfig, p: float, hp: BiquadCoeffs,
                        gen: int) -> Population:
    scores = pop.scores
    order = np.argsort(-scores, kind="stable")
    elite = order[:cfg.elite_size]
    elite_scores = scores[elite]
    children = [pop.members[pop.best_index]]
    for i in range(1, cfg.population_size):
        rng = member_rng(cfg.seed, gen, i)
        a = pop.members[elite[select_parent(elite_scores, rng)]]
        b = pop.members[elite[select_parent(elite_scores, rng)]]
        children.append(mutate(crossover(a, b, rng), p, cfg.noise, hp, rng))
    return Population(children)
