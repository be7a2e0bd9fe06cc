"""Bridge from pretrained vision-language checkpoints to EMB1 files."""

from .emb1 import read_emb1, write_emb1
from .export import (export_image_embeddings, export_text_embeddings,
                     read_manifest, read_prompt_file)

__version__ = "0.1.0"

__all__ = ["read_emb1", "write_emb1", "export_image_embeddings",
           "export_text_embeddings", "read_manifest", "read_prompt_file"]
