"""Stable content-derived identifiers.

All ids in the pipeline are BLAKE2 digests of their defining fields, so
re-running ingestion or indexing over identical bytes yields identical ids.
"""

from __future__ import annotations

import hashlib


def stable_id(*parts: str, size: int = 8) -> str:
    """Hex digest of the given parts; a unit separator guards field boundaries."""
    h = hashlib.blake2b(digest_size=size)
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()
