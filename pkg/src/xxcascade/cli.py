"""Command-line runner.

    xxcascade <experiment> --config FILE [--set key=value ...] [--workers N]
    xxcascade validate --config FILE [--set key=value ...]

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config, parse_text
from .pipelines import execute

MANIFEST = "manifest.txt"
FAILED_MARKER = ".failed"

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


@dataclass(frozen=True)
class RunManifest:
    config_snapshot: str
    files: tuple[str, ...]
    digests: dict
    tool_version: str

    def to_text(self) -> str:
        lines = [f"tool: xxcascade {self.tool_version}", "[config]"]
        lines += self.config_snapshot.splitlines()
        lines.append("[files]")
        lines += [f"{self.digests[name]}  {name}" for name in self.files]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunManifest":
        version, snapshot, digests, section = "", [], {}, None
        for line in text.splitlines():
            if line.startswith("tool: xxcascade "):
                version = line.split()[-1]
            elif line in ("[config]", "[files]"):
                section = line
            elif section == "[config]":
                snapshot.append(line)
            elif section == "[files]" and line:
                digest, name = line.split("  ", 1)
                digests[name] = digest
        snap = "".join(s + "\n" for s in snapshot)
        return cls(snap, tuple(digests), digests, version)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(config: ExperimentConfig, workers: int | None = None) -> RunManifest:
    """Execute the configured pipeline and write its artifacts plus ``manifest.txt``.

    Artifacts are rendered fully in memory before anything is written, and
    each file is written to a temporary name then renamed.  On any failure a
    ``.failed`` marker holding the error is left in the output directory.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    marker = out_dir / FAILED_MARKER
    workers = config.option("run", "workers") if workers is None else workers
    try:
        artifacts = execute(config, workers)
        names = tuple(sorted(artifacts))
        digests = {}
        for name in names:
            data = artifacts[name].encode("utf-8")
            digests[name] = sha256_hex(data)
            _atomic_write(out_dir / name, data)
        manifest = RunManifest(config.snapshot(), names, digests, __version__)
        _atomic_write(out_dir / MANIFEST, manifest.to_text().encode("utf-8"))
    except BaseException as exc:
        _atomic_write(marker, f"{type(exc).__name__}: {exc}\n".encode("utf-8"))
        raise
    if marker.exists():
        marker.unlink()
    return manifest


def verify_manifest(out_dir) -> list[str]:
    """Files whose content no longer matches the manifest digest."""
    out_dir = Path(out_dir)
    manifest = RunManifest.from_text((out_dir / MANIFEST).read_text(encoding="utf-8"))
    bad = []
    for name in manifest.files:
        path = out_dir / name
        if not path.exists() or sha256_hex(path.read_bytes()) != manifest.digests[name]:
            bad.append(name)
    return bad


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xxcascade", description="XX-X cascade simulation and analysis pipelines")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS + ("validate",):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration key (repeatable)")
        if name != "validate":
            p.add_argument("--output-dir", help="shorthand for --set output_dir=...")
            p.add_argument("--workers", type=int, help="parallel Monte Carlo workers (does not change results)")
    return parser


def _declared_experiment(path) -> str | None:
    try:
        entries, _ = parse_text(Path(path).read_text(encoding="utf-8"))
    except OSError:
        return None
    return entries["experiment"][1] if "experiment" in entries else None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.command != "validate":
        declared = _declared_experiment(args.config)
        if declared is not None and declared != args.command:
            print(f"error: config declares experiment {declared!r} but subcommand is {args.command!r}", file=sys.stderr)
            return EXIT_CONFIG
        overrides.append(f"experiment={args.command}")
        if args.output_dir:
            overrides.append(f"output_dir={args.output_dir}")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print("ok")
        return EXIT_OK
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run(cfg, args.workers)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for name in manifest.files:
        print(f"{manifest.digests[name]}  {Path(cfg.output_dir) / name}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
