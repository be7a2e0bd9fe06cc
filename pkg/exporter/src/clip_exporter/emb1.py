"""EMB1 file emission (and verification reads) for exported embeddings.

Layout, little-endian: magic "EMB1" | version u16=1 | dtype u8 (0=f32) |
reserved u8 | dim u32 | count u64 | row-major f32 payload. Sidecar
<path>.meta.json carries labels/attributes/groups and optional name
lists. This module is intentionally standalone: the exporter's only
contract with the consumer toolkit is this file format.
"""

import json
import os
import struct
import tempfile

import numpy as np

_MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sHBBIQ")


class Emb1Error(Exception):
    pass


def _atomic_write(path, blob):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-emb1-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_emb1(path, rows, labels, attributes, groups=None, class_names=None,
               attribute_names=None):
    """Write payload plus sidecar; the file appears only when complete."""
    rows = np.ascontiguousarray(np.asarray(rows, dtype=np.float64))
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise Emb1Error("rows must be a nonempty 2-d matrix")
    if not np.all(np.isfinite(rows)):
        raise Emb1Error("rows contain non-finite values")
    count, dim = rows.shape
    labels = [int(v) for v in labels]
    attributes = [int(v) for v in attributes]
    if len(labels) != count or len(attributes) != count:
        raise Emb1Error(
            f"{len(labels)} labels / {len(attributes)} attributes for {count} rows"
        )
    if groups is None:
        num_attr = (max(attributes) + 1) if attributes else 1
        if attribute_names is not None:
            num_attr = max(num_attr, len(attribute_names))
        groups = [y * num_attr + a for y, a in zip(labels, attributes)]
    groups = [int(g) for g in groups]
    header = _HEADER.pack(_MAGIC, 1, 0, 0, dim, count)
    _atomic_write(path, header + rows.astype(np.float32).tobytes(order="C"))
    meta = {"labels": labels, "attributes": attributes, "groups": groups}
    if class_names is not None:
        meta["class_names"] = [str(c) for c in class_names]
    if attribute_names is not None:
        meta["attribute_names"] = [str(a) for a in attribute_names]
    blob = (json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
    _atomic_write(path + ".meta.json", blob.encode("utf-8"))


def read_emb1(path):
    """Verification reader: returns (rows f64, meta dict)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise Emb1Error(f"{path}: truncated header")
    magic, version, dtype, _res, dim, count = _HEADER.unpack_from(blob)
    if magic != _MAGIC or version != 1 or dtype != 0:
        raise Emb1Error(f"{path}: unsupported header")
    expected = _HEADER.size + 4 * dim * count
    if len(blob) != expected:
        raise Emb1Error(f"{path}: payload size mismatch")
    rows = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    rows = rows.reshape(count, dim).astype(np.float64)
    with open(path + ".meta.json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    return rows, meta
