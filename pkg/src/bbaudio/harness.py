"""Corpus-scale evaluation: target generation, batch attacks and reports."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .attack import AttackConfig, run_attack
from .audio_io import AudioBuffer, read_wav, write_wav
from .metrics import target_similarity

log = logging.getLogger(__name__)

_WORD_RE = re.compile(r"[a-z]+")


def default_wordlist() -> list[str]:
    """The bundled list of 1000 common English words."""
    text = resources.files("bbaudio").joinpath("data/common_words.txt").read_text()
    return [w for w in text.split() if w]


def load_wordlist(path) -> list[str]:
    with open(path) as f:
        return [line.strip() for line in f if line.strip()]


def generate_target(wordlist: Sequence[str], rng: np.random.Generator) -> str:
    """Two distinct words drawn uniformly without replacement, space-joined."""
    words = sorted(set(wordlist))
    bad = [w for w in words if not _WORD_RE.fullmatch(w)]
    if bad:
        raise ValueError(f"wordlist entries must be lowercase a-z: {bad[:5]}")
    if len(words) < 2:
        raise ValueError("wordlist needs at least two distinct words")
    # keep the caller's order so a given seed maps to the same phrase
    ordered = list(dict.fromkeys(wordlist))
    i, j = rng.choice(len(ordered), size=2, replace=False)
    return f"{ordered[i]} {ordered[j]}"


def derive_seed(run_seed: int, index: int) -> int:
    """Per-entry seed: first 8 bytes of sha256("<run_seed>:<index>"), as a
    63-bit non-negative integer."""
    digest = hashlib.sha256(f"{run_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & (2 ** 63 - 1)


@dataclass(frozen=True)
class ManifestEntry:
    wav_path: str
    target: str | None = None


@dataclass(frozen=True)
class CorpusManifest:
    entries: list[ManifestEntry]
    wordlist_path: str | None = None

    @classmethod
    def load(cls, path) -> "CorpusManifest":
        """Read a JSON manifest; relative paths resolve against its directory."""
        base = Path(path).resolve().parent
        with open(path) as f:
            data = json.load(f)

        def resolve(p):
            return str(p if os.path.isabs(p) else base / p)

        entries = [ManifestEntry(resolve(e["wav_path"]), e.get("target") or e.get("fixed_target"))
                   for e in data.get("entries", [])]
        wl = data.get("wordlist_path")
        return cls(entries, resolve(wl) if wl else None)

    def wordlist(self) -> list[str]:
        return load_wordlist(self.wordlist_path) if self.wordlist_path else default_wordlist()


@dataclass
class SampleSummary:
    index: int
    wav_path: str
    seed: int
    target: str | None = None
    original_transcript: str | None = None
    transcript: str | None = None
    success: bool = False
    levenshtein: int | None = None
    target_similarity: float | None = None
    audio_correlation: float | None = None
    iterations_used: int | None = None
    error: str | None = None
    original: AudioBuffer | None = field(default=None, repr=False, compare=False)
    adversarial: AudioBuffer | None = field(default=None, repr=False, compare=False)

    @property
    def completed(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("original")
        d.pop("adversarial")
        return d


@dataclass
class CorpusReport:
    per_sample: list[SampleSummary]
    exact_success_rate: float
    mean_target_similarity: float | None
    mean_audio_correlation: float | None
    levenshtein_histogram: dict[int, int]
    generations_histogram: dict[int, int]
    n_failed: int = 0
    config: dict | None = None

    @classmethod
    def from_samples(cls, samples: list[SampleSummary], config: dict | None = None) -> "CorpusReport":
        """Aggregate over completed entries; failed ones only count in ``n_failed``."""
        done = [s for s in samples if s.completed]
        n = len(done)
        sims = [s.target_similarity for s in done if s.target_similarity is not None]
        corrs = [s.audio_correlation for s in done if s.audio_correlation is not None]
        lev = Counter(s.levenshtein for s in done)
        gens = Counter(s.iterations_used for s in done if s.levenshtein == 0)
        return cls(
            per_sample=samples,
            exact_success_rate=(sum(1 for s in done if s.levenshtein == 0) / n) if n else 0.0,
            mean_target_similarity=float(np.mean(sims)) if sims else None,
            mean_audio_correlation=float(np.mean(corrs)) if corrs else None,
            levenshtein_histogram=dict(sorted(lev.items())),
            generations_histogram=dict(sorted(gens.items())),
            n_failed=len(samples) - n,
            config=config,
        )

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "n_entries": len(self.per_sample),
            "n_failed": self.n_failed,
            "exact_success_rate": self.exact_success_rate,
            "mean_target_similarity": self.mean_target_similarity,
            "mean_audio_correlation": self.mean_audio_correlation,
            "levenshtein_histogram": {str(k): v for k, v in self.levenshtein_histogram.items()},
            "generations_histogram": {str(k): v for k, v in self.generations_histogram.items()},
            "per_sample": [s.to_dict() for s in self.per_sample],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusReport":
        return cls(
            per_sample=[SampleSummary(**s) for s in d["per_sample"]],
            exact_success_rate=d["exact_success_rate"],
            mean_target_similarity=d["mean_target_similarity"],
            mean_audio_correlation=d["mean_audio_correlation"],
            levenshtein_histogram={int(k): v for k, v in d["levenshtein_histogram"].items()},
            generations_histogram={int(k): v for k, v in d["generations_histogram"].items()},
            n_failed=d["n_failed"],
            config=d.get("config"),
        )


def run_entry(manifest: CorpusManifest, index: int, config: AttackConfig, oracle,
              wordlist: Sequence[str] | None = None) -> SampleSummary:
    """Attack one manifest entry exactly as ``run_corpus`` would."""
    entry = manifest.entries[index]
    seed = derive_seed(config.seed, index)
    summary = SampleSummary(index=index, wav_path=entry.wav_path, seed=seed)
    try:
        x = read_wav(entry.wav_path)
        target = entry.target
        if target is None:
            words = wordlist if wordlist is not None else manifest.wordlist()
            target = generate_target(words, np.random.default_rng(seed))
        summary.target = target
        result = run_attack(x, target, oracle, replace(config, seed=seed))
    except Exception as exc:
        log.warning("entry %d (%s) failed: %s", index, entry.wav_path, exc)
        summary.error = f"{type(exc).__name__}: {exc}"
        return summary

    summary.original_transcript = result.original_transcript
    summary.transcript = result.transcript
    summary.success = result.success
    summary.levenshtein = result.levenshtein
    # NaN (constant clip) becomes None so report.json stays strict JSON
    summary.audio_correlation = result.correlation if math.isfinite(result.correlation) else None
    summary.iterations_used = result.iterations_used
    if result.original_transcript:
        summary.target_similarity = target_similarity(result.transcript, target,
                                                      result.original_transcript)
    summary.original = x
    summary.adversarial = result.adversarial
    return summary


def run_corpus(manifest: CorpusManifest, config: AttackConfig, oracle,
               parallelism: int = 1) -> CorpusReport:
    """One attack per manifest entry; entries run on up to ``parallelism`` threads."""
    if not manifest.entries:
        raise ValueError("manifest has no entries")
    needs_words = any(e.target is None for e in manifest.entries)
    wordlist = manifest.wordlist() if needs_words else None
    idx = range(len(manifest.entries))

    def job(i):
        return run_entry(manifest, i, config, oracle, wordlist)

    if parallelism <= 1:
        samples = [job(i) for i in idx]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            samples = list(pool.map(job, idx))
    return CorpusReport.from_samples(samples, config.to_dict())


def write_overlay(original: AudioBuffer, adversarial: AudioBuffer, path) -> None:
    """CSV of (original, adversarial) sample pairs for waveform overlay plots."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["original", "adversarial"])
        w.writerows(zip(original.samples.tolist(), adversarial.samples.tolist()))


def emit_report(report: CorpusReport, out_dir) -> None:
    """Write report.json, histogram.csv and per-sample WAV/overlay files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as f:
        json.dump(report.to_dict(), f, indent=2, allow_nan=False)
    with open(out / "histogram.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["distance", "count"])
        w.writerows(report.levenshtein_histogram.items())
    for s in report.per_sample:
        if s.adversarial is None:
            continue
        write_wav(s.adversarial, out / f"adversarial_{s.index:03d}.wav")
        if s.original is not None:
            write_overlay(s.original, s.adversarial, out / f"overlay_{s.index:03d}.csv")
