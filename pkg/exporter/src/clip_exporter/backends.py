"""Encoder backends behind one interface: encode_images / encode_texts.

"clip" wraps a pretrained checkpoint through transformers and is the
production path; it needs torch plus a locally obtainable checkpoint.
"toy-clip" is a deterministic color-statistics encoder whose text and
image branches share one feature space (a color prompt embeds exactly
like a solid patch of that color), so the full export pipeline can be
exercised and smoke-checked without downloading model weights.
"""

import hashlib

import numpy as np

from .preprocess import denormalize, preprocess

TOY_DIM = 16
TOY_SIZE = 32

_COLOR_RGB = {
    "red": (0.85, 0.1, 0.1),
    "green": (0.1, 0.8, 0.15),
    "blue": (0.1, 0.15, 0.85),
    "yellow": (0.9, 0.85, 0.1),
    "white": (0.95, 0.95, 0.95),
    "black": (0.05, 0.05, 0.05),
    "orange": (0.95, 0.55, 0.1),
    "purple": (0.55, 0.1, 0.7),
    "gray": (0.5, 0.5, 0.5),
}


class BackendError(Exception):
    pass


def get_backend(model_id):
    if model_id == "toy-clip":
        return ToyColorBackend()
    return TransformersClipBackend(model_id)


class ToyColorBackend:
    """Deterministic shared-space encoder over color statistics."""

    name = "toy-clip"
    input_size = TOY_SIZE
    dim = TOY_DIM

    def _features_from_pixels(self, arr01):
        """(H, W, 3) in [0,1] -> unit feature vector of color statistics."""
        mean = arr01.mean(axis=(0, 1))
        std = arr01.std(axis=(0, 1))
        r, g, b = mean
        feats = np.array([
            r, g, b,
            r - g, g - b, b - r,
            mean.mean(),  # brightness
            std.mean(),  # texture proxy
            r * r, g * g, b * b,
            max(r, g, b), min(r, g, b),
            r * g, g * b, b * r,
        ])
        norm = np.linalg.norm(feats)
        return feats / norm if norm > 0 else feats

    def encode_image_batch(self, preprocessed):
        return np.stack([self._features_from_pixels(denormalize(arr))
                         for arr in preprocessed])

    def encode_texts(self, prompts):
        out = np.empty((len(prompts), self.dim))
        for i, prompt in enumerate(prompts):
            words = str(prompt).lower().split()
            color = next((w for w in words if w in _COLOR_RGB), None)
            if color is not None:
                patch = np.full((8, 8, 3), _COLOR_RGB[color], dtype=np.float64)
                out[i] = self._features_from_pixels(patch)
            else:
                # arbitrary prompts embed deterministically but unaligned
                digest = hashlib.sha256(str(prompt).encode("utf-8")).digest()
                raw = np.frombuffer(digest[:self.dim * 4], dtype="<i4")
                vec = raw.astype(np.float64)
                out[i] = vec / np.linalg.norm(vec)
        return out


class TransformersClipBackend:
    """Pretrained CLIP checkpoint via transformers (torch, eval mode)."""

    _ALIASES = {
        "RN50": "openai/clip-vit-base-patch32",
        "ViT-L/14@336px": "openai/clip-vit-large-patch14-336",
    }
    _INPUT_SIZES = {"RN50": 256, "ViT-L/14@336px": 336}

    def __init__(self, model_id):
        self.name = model_id
        self.input_size = self._INPUT_SIZES.get(
            model_id, 336 if "336" in model_id else 224)
        try:
            import torch
            from transformers import CLIPModel, CLIPTokenizer
        except ImportError as exc:
            raise BackendError(
                f"backend for {model_id!r} needs torch and transformers "
                f"(pip install 'corelens-exporter[clip]'): {exc}"
            ) from exc
        self._torch = torch
        resolved = self._ALIASES.get(model_id, model_id)
        try:
            self.model = CLIPModel.from_pretrained(resolved)
            self.tokenizer = CLIPTokenizer.from_pretrained(resolved)
        except Exception as exc:
            raise BackendError(
                f"cannot obtain checkpoint {resolved!r}; pass a local "
                f"directory path as the model id if offline ({exc})"
            ) from exc
        self.model.eval()
        self.dim = int(self.model.config.projection_dim)

    def encode_image_batch(self, preprocessed):
        torch = self._torch
        batch = np.stack(preprocessed).transpose(0, 3, 1, 2)
        with torch.no_grad():
            feats = self.model.get_image_features(
                pixel_values=torch.from_numpy(batch).float())
        return feats.cpu().numpy().astype(np.float64)

    def encode_texts(self, prompts):
        torch = self._torch
        try:
            tokens = self.tokenizer(list(prompts), padding=True,
                                    return_tensors="pt")
        except Exception as exc:
            raise BackendError(f"tokenizer failed: {exc}") from exc
        with torch.no_grad():
            feats = self.model.get_text_features(**tokens)
        return feats.cpu().numpy().astype(np.float64)


def image_preprocessor(backend):
    def run(image):
        return preprocess(image, backend.input_size)
    return run
