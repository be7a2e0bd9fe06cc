"""Export jobs: encode manifest-listed images or prompt lists to EMB1."""

import csv
import os
from dataclasses import dataclass

import numpy as np

from .backends import get_backend, image_preprocessor
from .emb1 import write_emb1
from .preprocess import DecodeError, load_image

BATCH_SIZE = 32


class ExportError(Exception):
    pass


@dataclass(frozen=True)
class ManifestRow:
    path: str
    label: int
    attribute: int


def read_manifest(path):
    """CSV with header path,label,attribute; one row per image."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            body = list(reader)
    except OSError as exc:
        raise ExportError(f"cannot read manifest {path}: {exc}") from exc
    if header is None or [h.strip() for h in header] != ["path", "label", "attribute"]:
        raise ExportError(f"{path}: manifest header must be path,label,attribute")
    if not body:
        raise ExportError(f"{path}: manifest has no rows")
    rows = []
    for i, rec in enumerate(body):
        if len(rec) != 3:
            raise ExportError(f"{path}: row {i} has {len(rec)} fields, expected 3")
        try:
            rows.append(ManifestRow(rec[0], int(rec[1]), int(rec[2])))
        except ValueError as exc:
            raise ExportError(f"{path}: row {i}: {exc}") from exc
    return rows


def export_image_embeddings(model_id, manifest_path, out_path, image_root=None):
    """One embedding row per manifest row, in manifest order.

    All referenced images must exist before any encoding starts; decode
    failures are collected and reported together, and the output file is
    only ever written complete.
    """
    rows = read_manifest(manifest_path)
    root = image_root if image_root is not None else os.path.dirname(
        os.path.abspath(manifest_path))
    paths = [r.path if os.path.isabs(r.path) else os.path.join(root, r.path)
             for r in rows]
    missing = [p for p in paths if not os.path.exists(p)]
    if missing:
        raise ExportError(
            f"{len(missing)} manifest image(s) not found, e.g. {missing[0]}"
        )
    backend = get_backend(model_id)
    prep = image_preprocessor(backend)

    decoded = []
    failures = []
    for path in paths:
        try:
            decoded.append(prep(load_image(path)))
        except DecodeError as exc:
            failures.append(str(exc))
    if failures:
        raise ExportError(
            "failed to decode {} image(s):\n  {}".format(
                len(failures), "\n  ".join(failures))
        )
    chunks = [backend.encode_image_batch(decoded[i:i + BATCH_SIZE])
              for i in range(0, len(decoded), BATCH_SIZE)]
    embeddings = np.concatenate(chunks, axis=0)
    write_emb1(out_path, embeddings,
               labels=[r.label for r in rows],
               attributes=[r.attribute for r in rows])
    return embeddings.shape


def export_text_embeddings(model_id, prompts, out_path):
    """One embedding row per prompt; prompts stored as class names."""
    prompts = [str(p) for p in prompts]
    if not prompts:
        raise ExportError("prompt list is empty")
    backend = get_backend(model_id)
    embeddings = backend.encode_texts(prompts)
    write_emb1(out_path, embeddings,
               labels=list(range(len(prompts))),
               attributes=[0] * len(prompts),
               class_names=prompts)
    return embeddings.shape


def read_prompt_file(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line.strip() for line in fh]
    except OSError as exc:
        raise ExportError(f"cannot read prompts {path}: {exc}") from exc
    prompts = [line for line in lines if line]
    if not prompts:
        raise ExportError(f"{path}: no prompts found")
    return prompts
