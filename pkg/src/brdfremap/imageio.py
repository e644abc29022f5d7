"""HDR / LDR image file I/O.

PFM is the precise interchange format (little-endian float32, bit-exact
round trips); PNG via Pillow covers LDR previews (sRGB), linear 8-bit data
and 16-bit single-channel data.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import DomainError


# ---------------------------------------------------------------------------
# PFM

def write_pfm(path, image: np.ndarray) -> None:
    """Write a (h, w, 3) color or (h, w) grayscale float array as PFM.

    Little-endian (scale -1.0); scanlines stored bottom-to-top per the
    format convention.  Data is converted to float32, so a float32 array
    round-trips bit-exactly.
    """
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[2] == 3:
        header = b"PF"
    elif image.ndim == 2:
        header = b"Pf"
    else:
        raise DomainError(f"PFM supports (h, w, 3) or (h, w), got {image.shape}")
    h, w = image.shape[:2]
    data = np.flipud(image.astype("<f4"))
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(data.tobytes())


def _read_pfm_token(f) -> bytes:
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise DomainError("truncated PFM header")
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float32 array, (h, w, 3) or (h, w)."""
    with open(path, "rb") as f:
        kind = _read_pfm_token(f)
        if kind not in (b"PF", b"Pf"):
            raise DomainError(f"not a PFM file: header {kind!r}")
        w = int(_read_pfm_token(f))
        h = int(_read_pfm_token(f))
        scale = float(_read_pfm_token(f))
        channels = 3 if kind == b"PF" else 1
        dtype = "<f4" if scale < 0 else ">f4"
        raw = f.read(w * h * channels * 4)
        if len(raw) != w * h * channels * 4:
            raise DomainError("truncated PFM data")
    data = np.frombuffer(raw, dtype=dtype).reshape(h, w, channels)
    data = np.flipud(data).astype(np.float32)
    return data[:, :, 0] if channels == 1 else data


# ---------------------------------------------------------------------------
# transfer functions

def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """Linear [0, 1] -> sRGB [0, 1] (values are clamped first)."""
    x = np.clip(linear, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x,
                    1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def srgb_decode(encoded: np.ndarray) -> np.ndarray:
    x = np.clip(encoded, 0.0, 1.0)
    return np.where(x <= 0.04045, x / 12.92,
                    np.power((x + 0.055) / 1.055, 2.4))


# ---------------------------------------------------------------------------
# PNG via Pillow

def write_png_rgb8(path, values: np.ndarray, transfer: str = "srgb") -> None:
    """Write (h, w, 3) float data as 8-bit RGB PNG.

    transfer = "srgb" applies the sRGB curve after clamping to [0, 1];
    "linear" quantizes clamped linear values directly.
    """
    values = np.asarray(values, float)
    if transfer == "srgb":
        values = srgb_encode(values)
    elif transfer == "linear":
        values = np.clip(values, 0.0, 1.0)
    else:
        raise DomainError(f"unknown transfer {transfer!r}")
    img = (values * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(img, mode="RGB").save(path)


def read_png_rgb(path, transfer: str = "srgb") -> np.ndarray:
    img = Image.open(path).convert("RGB")
    data = np.asarray(img, float) / 255.0
    return srgb_decode(data) if transfer == "srgb" else data


def write_png_gray16(path, values: np.ndarray) -> None:
    """Write (h, w) float data in [0, 1] as a 16-bit grayscale PNG."""
    q = (np.clip(np.asarray(values, float), 0.0, 1.0) * 65535.0 + 0.5).astype(np.uint16)
    Image.fromarray(q).save(path)


def read_png_gray(path) -> np.ndarray:
    img = Image.open(path)
    data = np.asarray(img, float)
    if img.mode == "I;16" or data.max() > 255:
        return data / 65535.0
    return data / 255.0


# ---------------------------------------------------------------------------
# false color for diagnostic maps

# 5-stop diverging map (low -> high): dark blue, blue, white, orange, red.
_FALSE_COLOR_STOPS = np.array([
    [0.05, 0.05, 0.35],
    [0.20, 0.45, 0.85],
    [1.00, 1.00, 1.00],
    [0.95, 0.55, 0.15],
    [0.75, 0.05, 0.05],
])


def false_color(values: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    """Map scalar values to an (h, w, 3) float RGB false-color image."""
    t = np.clip((np.asarray(values, float) - vmin) / max(vmax - vmin, 1e-30), 0.0, 1.0)
    pos = t * (len(_FALSE_COLOR_STOPS) - 1)
    idx = np.minimum(pos.astype(int), len(_FALSE_COLOR_STOPS) - 2)
    frac = (pos - idx)[..., None]
    lo = _FALSE_COLOR_STOPS[idx]
    hi = _FALSE_COLOR_STOPS[idx + 1]
    return lo + frac * (hi - lo)


def write_false_color_png(path, values: np.ndarray, vmin: float, vmax: float) -> None:
    write_png_rgb8(path, false_color(values, vmin, vmax), transfer="linear")
