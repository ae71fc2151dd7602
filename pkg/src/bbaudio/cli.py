"""Command-line entry points.

    attack single --in clip.wav --target "two words" [--config cfg.toml] --out DIR
    attack corpus --manifest corpus.json [--config cfg.json] --out DIR --parallelism N
    oracle serve --seed N --port P

``--oracle`` selects ``toy`` (in-process, default) or ``http:<url>``.
Exit status is 0 whenever a run completes, whether or not the attack
succeeded, and non-zero on operational errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .attack import AttackAborted, AttackConfig, run_attack
from .audio_io import WavError, read_wav, write_wav
from .harness import CorpusManifest, emit_report, run_corpus, write_overlay
from .victim import HttpOracle, OracleError, ToyVictim, ToyVictimParams, make_server

log = logging.getLogger("bbaudio")


def load_config(path: str | None) -> AttackConfig:
    """Read an AttackConfig from a .json or .toml file (keys = field names)."""
    if path is None:
        return AttackConfig()
    p = Path(path)
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        with open(p, "rb") as f:
            data = tomllib.load(f)
    else:
        with open(p) as f:
            data = json.load(f)
    return AttackConfig.from_dict(data)


def make_oracle(name: str, victim_seed: int = 0, timeout: float = 10.0, retries: int = 2):
    if name == "toy":
        return ToyVictim(ToyVictimParams(seed=victim_seed))
    if name.startswith("http:"):
        return HttpOracle(name[len("http:"):], timeout=timeout, retries=retries)
    raise ValueError(f"unknown oracle {name!r}; use 'toy' or 'http:<url>'")


def _add_oracle_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--oracle", default="toy", help="'toy' or 'http:<url>' (default: toy)")
    p.add_argument("--victim-seed", type=int, default=0, help="weight seed for the toy victim")
    p.add_argument("--timeout", type=float, default=10.0, help="HTTP oracle timeout, seconds")
    p.add_argument("--retries", type=int, default=2, help="HTTP oracle retry count")
    p.add_argument("--config", help="attack config file (.json or .toml)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def attack_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="attack", description="Black-box targeted audio attack")
    sub = parser.add_subparsers(dest="command", required=True)

    single = sub.add_parser("single", help="attack one WAV file")
    single.add_argument("--in", dest="input", required=True, help="16-bit mono PCM WAV")
    single.add_argument("--target", required=True, help="target phrase (a-z and space)")
    _add_oracle_args(single)

    corpus = sub.add_parser("corpus", help="attack every entry of a manifest")
    corpus.add_argument("--manifest", required=True, help="JSON corpus manifest")
    corpus.add_argument("--parallelism", type=int, default=1)
    _add_oracle_args(corpus)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        oracle = make_oracle(args.oracle, args.victim_seed, args.timeout, args.retries)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "single":
            return _single(args, config, oracle, out)
        return _corpus(args, config, oracle, out)
    except (OSError, ValueError, WavError, OracleError, AttackAborted) as exc:
        log.error("%s", exc)
        return 1


def _single(args, config, oracle, out: Path) -> int:
    x = read_wav(args.input)
    result = run_attack(x, args.target, oracle, config)
    with open(out / "result.json", "w") as f:
        json.dump(result.to_dict(include_audio=False), f, indent=2)
    write_wav(result.adversarial, out / "adversarial.wav")
    write_overlay(x, result.adversarial, out / "overlay.csv")
    print(f"{'success' if result.success else 'no exact match'}: {result.transcript!r} "
          f"(target {args.target!r}, distance {result.levenshtein}, "
          f"{result.iterations_used} generations, correlation {result.correlation:.4f})")
    return 0


def _corpus(args, config, oracle, out: Path) -> int:
    manifest = CorpusManifest.load(args.manifest)
    report = run_corpus(manifest, config, oracle, parallelism=args.parallelism)
    emit_report(report, out)
    sim = report.mean_target_similarity
    corr = report.mean_audio_correlation
    print(f"{len(report.per_sample)} entries, {report.n_failed} failed; "
          f"exact success {report.exact_success_rate:.1%}, "
          f"target similarity {'n/a' if sim is None else f'{sim:.1%}'}, "
          f"audio correlation {'n/a' if corr is None else f'{corr:.1%}'}")
    return 0


def oracle_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="oracle", description="Toy oracle over HTTP")
    sub = parser.add_subparsers(dest="command", required=True)
    serve = sub.add_parser("serve", help="serve the toy victim on loopback")
    serve.add_argument("--seed", type=int, default=0, help="toy victim weight seed")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--host", default="127.0.0.1")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    try:
        server = make_server(ToyVictim(ToyVictimParams(seed=args.seed)), args.host, args.port)
    except OSError as exc:
        log.error("cannot bind %s:%d: %s", args.host, args.port, exc)
        return 1
    host, port = server.server_address[:2]
    print(f"serving toy oracle (seed {args.seed}) at http://{host}:{port}/score", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(attack_main())
