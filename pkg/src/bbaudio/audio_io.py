"""WAV reading/writing and the in-memory sample representation.

Samples are float64 values in 16-bit full-scale units (not normalized), so
noise levels and finite-difference steps are expressed in PCM counts.
"""
from __future__ import annotations

import os
import wave
from dataclasses import dataclass

import numpy as np

PCM_MIN = -32768
PCM_MAX = 32767
DEFAULT_SAMPLE_RATE = 16000


class WavError(Exception):
    """Base class for WAV decoding problems."""


class UnsupportedFormatError(WavError):
    """File is WAV but not 16-bit mono PCM."""


class TruncatedWavError(WavError):
    """The data chunk holds fewer frames than the header declares."""


class NotWavError(WavError):
    """File is not a RIFF/WAVE container."""


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"expected 1-d samples, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, AudioBuffer):
            return NotImplemented
        return (self.sample_rate == other.sample_rate
                and np.array_equal(self.samples, other.samples))

    def copy(self) -> "AudioBuffer":
        return AudioBuffer(self.samples.copy(), self.sample_rate)

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def to_pcm16(samples) -> np.ndarray:
    """Round to nearest integer and clamp into the int16 range."""
    return np.clip(np.rint(np.asarray(samples, dtype=np.float64)),
                   PCM_MIN, PCM_MAX).astype("<i2")


def read_wav(path) -> AudioBuffer:
    """Read a 16-bit mono PCM WAV file.

    Sample values are returned unscaled (PCM counts as floats). Raises
    FileNotFoundError, NotWavError, UnsupportedFormatError or
    TruncatedWavError.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with wave.open(path, "rb") as f:
            channels = f.getnchannels()
            width = f.getsampwidth()
            rate = f.getframerate()
            nframes = f.getnframes()
            if channels != 1:
                raise UnsupportedFormatError(f"{path}: {channels} channels, expected mono")
            if width != 2:
                raise UnsupportedFormatError(f"{path}: {8 * width}-bit samples, expected 16-bit")
            raw = f.readframes(nframes)
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise UnsupportedFormatError(f"{path}: non-PCM encoding ({msg})") from exc
        raise NotWavError(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise TruncatedWavError(f"{path}: header ends prematurely") from exc

    if len(raw) < nframes * 2:
        raise TruncatedWavError(
            f"{path}: header declares {nframes} frames, data chunk holds {len(raw) // 2}")
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(pcm.astype(np.float64), rate)


def write_wav(buffer: AudioBuffer, path) -> None:
    """Write ``buffer`` as 16-bit mono PCM, rounding and clamping each sample."""
    if len(buffer) == 0:
        raise ValueError("cannot write an empty buffer")
    pcm = to_pcm16(buffer.samples)
    # open the file first so a bad path fails before wave sees it
    with open(path, "wb") as raw, wave.open(raw, "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(buffer.sample_rate)
        f.writeframes(pcm.tobytes())
