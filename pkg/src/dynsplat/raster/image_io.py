"""Image file round-trips for renders and test fixtures.

PNG is the lossy-by-quantization 8-bit interchange format; PFM stores raw
float32 scanlines for bit-exact fixtures. Values map linearly between
[0, 1] and the 8-bit range with no gamma handling.
"""

import numpy as np
from PIL import Image

from ..errors import InvalidInputError


def write_png(path, pixels: np.ndarray) -> None:
    """Save an (H, W, 3) float image in [0, 1]; values are clipped."""
    arr = np.asarray(pixels, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError("expected an (H, W, 3) image")
    u8 = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8, mode="RGB").save(path)


def read_png(path) -> np.ndarray:
    """Load a PNG as (H, W, 3) float in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=float)
    return arr / 255.0


def write_pfm(path, pixels: np.ndarray) -> None:
    """Save a float image losslessly (PFM, little-endian float32).

    Accepts (H, W) or (H, W, 3). PFM stores scanlines bottom-up.
    """
    arr = np.asarray(pixels, dtype=np.float32)
    if arr.ndim == 2:
        header = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = b"PF"
    else:
        raise InvalidInputError("expected an (H, W) or (H, W, 3) image")
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")  # negative scale marks little-endian
        f.write(np.flipud(arr).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise InvalidInputError("not a PFM file")
        w, h = (int(v) for v in f.readline().split())
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dtype)
    if data.size != w * h * channels:
        raise InvalidInputError("truncated PFM payload")
    shape = (h, w) if channels == 1 else (h, w, 3)
    return np.flipud(data.reshape(shape)).astype(np.float64)
