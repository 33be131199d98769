"""Run manifests: every CLI command records what it ran, with what config
and seed, and the content hashes of its inputs and outputs. Replaying the
recorded argv in deterministic mode reproduces the outputs bit-exactly,
which the stored hashes make checkable."""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

__all__ = ["file_sha256", "write_manifest", "load_manifest", "replay_argv"]


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, argv: list[str], config: dict, seed: int,
                   inputs: dict[str, str], outputs: dict[str, str]) -> dict:
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": int(seed),
        "inputs": dict(inputs),
        "outputs": dict(outputs),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def replay_argv(manifest: dict, out_dir) -> list[str]:
    """The recorded argv with its --out redirected to a fresh directory."""
    argv = list(manifest["argv"])
    if "--out" in argv:
        i = argv.index("--out")
        argv[i + 1] = str(out_dir)
    else:
        argv += ["--out", str(out_dir)]
    return argv
