"""PNG decode/encode to and from (3, H, W) float arrays in [0, 1]."""

import numpy as np
from PIL import Image, UnidentifiedImageError

__all__ = ["decode_image", "encode_image", "encode_gray"]


def decode_image(path, dtype=np.float64):
    """Load an 8-bit PNG as a (3, H, W) array scaled to [0, 1].

    Grayscale images are promoted to 3 channels by replication; palette
    and alpha images are converted to RGB.
    """
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"cannot decode image {path!r}: {exc}") from exc
    if img.format != "PNG":
        raise ValueError(f"unsupported format {img.format!r} for {path!r}, expected PNG")
    if img.mode in ("I", "I;16", "F"):
        raise ValueError(f"unsupported bit depth (mode {img.mode!r}) in {path!r}")
    if img.mode == "L":
        arr = np.asarray(img, dtype=dtype) / 255.0
        return np.repeat(arr[None], 3, axis=0)
    if img.mode != "RGB":
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=dtype) / 255.0
    return arr.transpose(2, 0, 1)


def encode_image(tensor, path):
    """Write a (3, H, W) array in [0, 1] as an 8-bit RGB PNG."""
    arr = np.asarray(tensor)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"encode_image: expected (3,H,W) tensor, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("encode_image: tensor contains NaN or Inf")
    q = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(q.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def encode_gray(map2d, path):
    """Write a (H, W) array in [0, 1] as an 8-bit grayscale PNG."""
    arr = np.asarray(map2d)
    if arr.ndim != 2:
        raise ValueError(f"encode_gray: expected (H,W) map, got {arr.shape}")
    q = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(q, mode="L").save(path, format="PNG")
