"""Deterministic work distribution and run manifests.

Tasks are enumerated up front and results are gathered in task order, so the
written outputs are identical for any worker count.  Workers share nothing
mutable; payloads and results travel by pickling.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import os
import time
from pathlib import Path


def resolve_workers(cli_value: int | None, config_value: int | None = None) -> int:
    """Worker count precedence: --workers, then ROTOR_WORKERS, then config."""
    if cli_value is not None:
        return max(1, cli_value)
    env = os.environ.get("ROTOR_WORKERS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"ROTOR_WORKERS must be an integer, got {env!r}")
    if config_value is not None:
        return max(1, config_value)
    return 1


def parallel_map(fn, payloads, n_workers: int = 1) -> list:
    """map(fn, payloads) over a process pool, results in payload order."""
    payloads = list(payloads)
    if n_workers <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    with multiprocessing.Pool(processes=min(n_workers, len(payloads))) as pool:
        return pool.map(fn, payloads)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(
    out_dir: Path,
    config_text: str,
    outputs: list[Path],
    wall_time_s: float,
) -> Path:
    """Write manifest.json: config hash, code version, per-output checksums."""
    from . import __version__

    manifest = {
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "code_version": __version__,
        "outputs": {p.name: sha256_file(p) for p in sorted(outputs)},
        "wall_time_s": round(wall_time_s, 3),
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


class Stopwatch:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        return False
