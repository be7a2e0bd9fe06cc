"""Deterministic artifact emission: canonical JSON, atomic writes, digests.

Every JSON artifact carries the resolved config digest and seed under
"provenance" and keeps the wall-clock stamp isolated under the single
top-level "timestamp" key, so byte comparison after dropping that one
key is exact.
"""

import csv
import hashlib
import json
import os
import tempfile
from datetime import datetime, timezone


def canonical_json(doc):
    """Stable serialization: sorted keys, compact separators, trailing newline."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def digest_config(command, config):
    blob = canonical_json({"command": command, "config": config})
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def atomic_write_bytes(path, blob):
    path = str(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-artifact-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_artifact(path, kind, payload, command, config, seed=None,
                   timestamp=True):
    """Write a stamped JSON artifact atomically."""
    doc = {
        "kind": kind,
        "payload": payload,
        "provenance": {
            "command": command,
            "config_digest": digest_config(command, config),
            "seed": seed,
            "tool": "corelens 0.1.0",
        },
    }
    if timestamp:
        doc["timestamp"] = datetime.now(timezone.utc).isoformat()
    atomic_write_text(path, canonical_json(doc))
    return doc


def write_csv(path, fieldnames, rows):
    """Atomic CSV with a fixed header (deterministic bytes)."""
    import io

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fieldnames), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    atomic_write_text(path, buf.getvalue())


def load_artifact(path, expected_kind=None):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if expected_kind is not None and doc.get("kind") != expected_kind:
        raise ValueError(
            f"{path}: artifact kind {doc.get('kind')!r}, expected {expected_kind!r}"
        )
    return doc
