"""Targeted black-box adversarial audio against speech-to-text oracles."""
from .attack import AttackConfig, AttackResult, run_attack
from .audio_io import AudioBuffer, read_wav, write_wav

__version__ = "0.1.0"

__all__ = ["AttackConfig", "AttackResult", "run_attack", "AudioBuffer", "read_wav", "write_wav"]
