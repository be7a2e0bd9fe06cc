"""Labeled embedding sets: EMB1 binary I/O, synthesis, and splitting.

An embedding set is an N x D matrix of rows with aligned class labels,
spurious-attribute labels, and group ids, where group = label * A + attribute.
Files use the EMB1 layout (f32 payload, little-endian) with a JSON sidecar
holding the integer id arrays and optional name lists; in memory everything
is float64. Small cases may also be read from CSV (header d0..dD-1,label,attribute).
"""

import csv
import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ConsistencyError, DataError, FormatError
from .rng import Xoshiro256pp

_MAGIC = b"EMB1"
_VERSION = 1
_DTYPE_F32 = 0
_HEADER = struct.Struct("<4sHBBIQ")  # magic, version, dtype, reserved, dim, count


@dataclass(frozen=True)
class EmbeddingSet:
    """Immutable matrix of embeddings with aligned group structure."""

    rows: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) int64 in [0, num_classes)
    attributes: np.ndarray  # (N,) int64 in [0, num_attributes)
    groups: np.ndarray  # (N,) int64, label * num_attributes + attribute
    num_classes: int
    num_attributes: int
    class_names: tuple = None
    attribute_names: tuple = None

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float64))
        if rows.ndim != 2:
            raise DataError("rows must be a 2-d matrix")
        n, _ = rows.shape
        if n < 1:
            raise DataError("an embedding set needs at least one row")
        ids = {}
        for name in ("labels", "attributes", "groups"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.shape != (n,):
                raise ConsistencyError(
                    f"{name} has length {arr.shape}, expected ({n},)"
                )
            ids[name] = arr
        bad = ~np.isfinite(rows)
        if bad.any():
            idx = int(np.argwhere(bad.any(axis=1))[0, 0])
            raise DataError(f"non-finite value in embedding row {idx}")
        c, a = self.num_classes, self.num_attributes
        if c < 1 or a < 1:
            raise DataError("num_classes and num_attributes must be >= 1")
        if ids["labels"].min() < 0 or ids["labels"].max() >= c:
            raise DataError(f"label out of range [0, {c})")
        if ids["attributes"].min() < 0 or ids["attributes"].max() >= a:
            raise DataError(f"attribute out of range [0, {a})")
        expected = ids["labels"] * a + ids["attributes"]
        if not np.array_equal(ids["groups"], expected):
            idx = int(np.argwhere(ids["groups"] != expected)[0, 0])
            raise ConsistencyError(
                f"group id at index {idx} does not equal label*A + attribute"
            )
        for name in ("class_names", "attribute_names"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(str(v) for v in val))
        rows.setflags(write=False)
        for name, arr in ids.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def build(cls, rows, labels, attributes, groups=None, num_classes=None,
              num_attributes=None, class_names=None, attribute_names=None):
        """Construct a set, inferring id ranges and deriving groups if absent."""
        labels = np.asarray(labels, dtype=np.int64)
        attributes = np.asarray(attributes, dtype=np.int64)
        if labels.size == 0 or attributes.size == 0:
            raise DataError("labels and attributes must be nonempty")
        if num_classes is None:
            num_classes = int(labels.max()) + 1
            if class_names is not None:
                num_classes = max(num_classes, len(class_names))
        if num_attributes is None:
            num_attributes = int(attributes.max()) + 1
            if attribute_names is not None:
                num_attributes = max(num_attributes, len(attribute_names))
        if groups is None:
            groups = derive_groups(labels, attributes, num_attributes)
        return cls(rows=np.asarray(rows), labels=labels, attributes=attributes,
                   groups=np.asarray(groups), num_classes=num_classes,
                   num_attributes=num_attributes, class_names=class_names,
                   attribute_names=attribute_names)

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def dim(self):
        return self.rows.shape[1]

    @property
    def num_groups(self):
        return self.num_classes * self.num_attributes

    def with_rows(self, rows):
        """Same labels/attributes/groups, new row matrix (dims must match)."""
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape != self.rows.shape:
            raise DataError(
                f"replacement rows have shape {rows.shape}, expected {self.rows.shape}"
            )
        return replace(self, rows=rows)

    def take(self, indices):
        """Subset by row indices, preserving all metadata."""
        idx = np.asarray(indices, dtype=np.int64)
        return replace(self, rows=self.rows[idx], labels=self.labels[idx],
                       attributes=self.attributes[idx], groups=self.groups[idx])


def derive_groups(labels, attributes, num_attributes):
    """Group id g = y * A + a; enumeration order follows (class, attribute)."""
    labels = np.asarray(labels, dtype=np.int64)
    attributes = np.asarray(attributes, dtype=np.int64)
    if labels.shape != attributes.shape:
        raise ConsistencyError("labels and attributes must have equal length")
    if labels.size and labels.min() < 0:
        raise DataError("negative label id")
    if attributes.size:
        if attributes.min() < 0 or attributes.max() >= num_attributes:
            raise DataError(f"attribute id out of range [0, {num_attributes})")
    return labels * int(num_attributes) + attributes


@dataclass(frozen=True)
class SyntheticConfig:
    """Planted two-direction generator config.

    group_counts are the (y, a) cell sizes in order (0,0), (0,1), (1,0), (1,1).
    Each sample is s(y)*beta_core*u_core + s(a)*beta_spur*u_spur + sigma*noise
    with s(0) = -1, s(1) = +1 and u_core orthonormal to u_spur.
    """

    group_counts: tuple
    dim: int
    beta_core: float
    beta_spur: float
    sigma: float
    seed: int

    def __post_init__(self):
        counts = tuple(int(c) for c in self.group_counts)
        if len(counts) != 4 or any(c < 0 for c in counts):
            raise ConfigError("group_counts must be 4 non-negative integers")
        if sum(counts) < 4:
            raise ConfigError("total sample count must be >= 4")
        if counts[0] + counts[1] == 0 or counts[2] + counts[3] == 0:
            raise ConfigError("each class needs at least one sample")
        if self.dim < 2:
            raise ConfigError("dim must be >= 2")
        if not self.sigma > 0:
            raise ConfigError("sigma must be > 0")
        object.__setattr__(self, "group_counts", counts)


def generate_synthetic(cfg):
    """Draw a planted-direction set; returns (set, core_dir, spur_dir).

    Deterministic given cfg.seed. The returned unit directions let tests
    score against the planted signal directly.
    """
    rng = Xoshiro256pp(cfg.seed)
    d = int(cfg.dim)
    u_core = rng.normals((d,))
    u_core /= np.linalg.norm(u_core)
    raw = rng.normals((d,))
    raw -= np.dot(raw, u_core) * u_core
    nrm = np.linalg.norm(raw)
    while nrm < 1e-12:  # essentially impossible, but keep the stream total
        raw = rng.normals((d,))
        raw -= np.dot(raw, u_core) * u_core
        nrm = np.linalg.norm(raw)
    u_spur = raw / nrm

    cells = [(0, 0), (0, 1), (1, 0), (1, 1)]
    total = sum(cfg.group_counts)
    rows = np.empty((total, d), dtype=np.float64)
    labels = np.empty(total, dtype=np.int64)
    attributes = np.empty(total, dtype=np.int64)
    sign = (-1.0, 1.0)
    pos = 0
    for (y, a), count in zip(cells, cfg.group_counts):
        if count == 0:
            continue
        base = sign[y] * cfg.beta_core * u_core + sign[a] * cfg.beta_spur * u_spur
        noise = rng.normals((count, d))
        rows[pos:pos + count] = base + cfg.sigma * noise
        labels[pos:pos + count] = y
        attributes[pos:pos + count] = a
        pos += count
    dataset = EmbeddingSet.build(rows, labels, attributes,
                                 num_classes=2, num_attributes=2)
    return dataset, u_core, u_spur


def split(dataset, fractions, seed):
    """Seeded permutation split into (train, val, test).

    Sizes are floor(N * fraction) with the remainder going to train.
    """
    fracs = tuple(float(f) for f in fractions)
    if len(fracs) != 3 or any(f <= 0 for f in fracs):
        raise ConfigError("fractions must be 3 positive numbers")
    if abs(sum(fracs) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(fracs)}")
    n = dataset.n
    sizes = [int(np.floor(n * f)) for f in fracs]
    sizes[0] += n - sum(sizes)
    if n >= 3:
        for name, size in zip(("train", "val", "test"), sizes):
            if size == 0:
                raise ConfigError(f"{name} split would receive 0 samples")
    perm = Xoshiro256pp(seed).permutation(n)
    bounds = np.cumsum([0] + sizes)
    parts = [dataset.take(perm[bounds[i]:bounds[i + 1]]) for i in range(3)]
    return tuple(parts)


def write_embeddings(dataset, path):
    """Write EMB1 payload (f32, round-to-nearest) plus JSON sidecar."""
    path = str(path)
    payload = dataset.rows.astype(np.float32)
    header = _HEADER.pack(_MAGIC, _VERSION, _DTYPE_F32, 0,
                          dataset.dim, dataset.n)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload.tobytes(order="C"))
        meta = {
            "labels": dataset.labels.tolist(),
            "attributes": dataset.attributes.tolist(),
            "groups": dataset.groups.tolist(),
        }
        if dataset.class_names is not None:
            meta["class_names"] = list(dataset.class_names)
        if dataset.attribute_names is not None:
            meta["attribute_names"] = list(dataset.attribute_names)
        with open(path + ".meta.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
    except OSError as exc:
        raise DataError(f"cannot write embeddings to {path}: {exc}") from exc


def read_embeddings(path):
    """Read an EMB1 file (or CSV for .csv paths) into an EmbeddingSet."""
    path = str(path)
    if path.lower().endswith(".csv"):
        return _read_csv(path)
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, dtype, _reserved, dim, count = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != _DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    if dim == 0 or count == 0:
        raise FormatError(f"{path}: empty payload (dim={dim}, count={count})")
    expected = _HEADER.size + 4 * dim * count
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload size {len(blob) - _HEADER.size} bytes, "
            f"expected {expected - _HEADER.size}"
        )
    payload = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    rows = payload.reshape(count, dim).astype(np.float64)

    meta_path = path + ".meta.json"
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise ConsistencyError(f"missing sidecar {meta_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON sidecar {meta_path}: {exc}") from exc
    if not isinstance(meta, dict):
        raise FormatError(f"{meta_path}: sidecar must be a JSON object")
    for key in ("labels", "attributes"):
        if key not in meta:
            raise ConsistencyError(f"{meta_path}: missing '{key}'")
        if len(meta[key]) != count:
            raise ConsistencyError(
                f"{meta_path}: {len(meta[key])} {key} for {count} rows"
            )
    groups = meta.get("groups")
    if groups is not None and len(groups) != count:
        raise ConsistencyError(f"{meta_path}: group count mismatch")
    return EmbeddingSet.build(
        rows, meta["labels"], meta["attributes"], groups=groups,
        class_names=meta.get("class_names"),
        attribute_names=meta.get("attribute_names"),
    )


def _read_csv(path):
    """CSV fallback: header d0..dD-1,label,attribute, one sample per row."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise FormatError(f"{path}: empty CSV") from None
            body = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    header = [h.strip() for h in header]
    if len(header) < 3 or header[-2:] != ["label", "attribute"]:
        raise FormatError(f"{path}: CSV header must end with label,attribute")
    dim = len(header) - 2
    if header[:dim] != [f"d{i}" for i in range(dim)]:
        raise FormatError(f"{path}: CSV dimension columns must be d0..d{dim - 1}")
    if not body:
        raise FormatError(f"{path}: CSV has no data rows")
    rows = np.empty((len(body), dim), dtype=np.float64)
    labels = np.empty(len(body), dtype=np.int64)
    attributes = np.empty(len(body), dtype=np.int64)
    for i, rec in enumerate(body):
        if len(rec) != dim + 2:
            raise ConsistencyError(f"{path}: row {i} has {len(rec)} fields")
        try:
            rows[i] = [float(v) for v in rec[:dim]]
            labels[i] = int(rec[dim])
            attributes[i] = int(rec[dim + 1])
        except ValueError as exc:
            raise DataError(f"{path}: row {i}: {exc}") from exc
    return EmbeddingSet.build(rows, labels, attributes)
