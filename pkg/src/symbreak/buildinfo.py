"""Build hash: digest of the package sources, echoed into every report."""

from __future__ import annotations

import hashlib
import pathlib


def build_hash() -> str:
    root = pathlib.Path(__file__).parent
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*.py")):
        digest.update(path.relative_to(root).as_posix().encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:12]
