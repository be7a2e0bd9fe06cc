"""Image preprocessing for CLIP-style encoders.

Bicubic resize of the shorter edge to the model's input size, center
crop, then per-channel normalization with the CLIP pixel statistics. No
augmentation.
"""

import numpy as np
from PIL import Image

CLIP_MEAN = np.array([0.4815, 0.4578, 0.4082], dtype=np.float64)
CLIP_STD = np.array([0.2686, 0.2613, 0.2758], dtype=np.float64)


class DecodeError(Exception):
    pass


def load_image(path):
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except (OSError, ValueError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def preprocess(image, size):
    """(H, W) -> (size, size, 3) float64 in normalized units."""
    w, h = image.size
    scale = size / min(w, h)
    new_w, new_h = max(size, round(w * scale)), max(size, round(h * scale))
    resized = image.resize((new_w, new_h), resample=Image.BICUBIC)
    left = (new_w - size) // 2
    top = (new_h - size) // 2
    cropped = resized.crop((left, top, left + size, top + size))
    arr = np.asarray(cropped, dtype=np.float64) / 255.0
    return (arr - CLIP_MEAN) / CLIP_STD


def denormalize(arr):
    """Back to [0, 1] RGB units (used by statistics-based backends)."""
    return np.clip(arr * CLIP_STD + CLIP_MEAN, 0.0, 1.0)
