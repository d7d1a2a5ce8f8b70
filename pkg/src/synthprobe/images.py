"""Small image utilities: dtype conversion, bilinear resampling, PPM/PNG io.

Images are ``(H, W, 3)`` arrays, either ``uint8`` or float in ``[0, 1]``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

LUMA = np.array([0.299, 0.587, 0.114])


def as_float(image):
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return image.astype(np.float64) / 255.0
    return image.astype(np.float64, copy=False)


def as_uint8(image):
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return image
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def luminance(image):
    return as_float(image)[..., :3] @ LUMA


def _sample_coords(start, length, out_size):
    # half-pixel centred mapping, clamped to the source window; start and
    # length are (N, 1) so every window is handled at once
    c = start + (np.arange(out_size) + 0.5) * (length / out_size) - 0.5
    c = np.clip(c, start, start + length - 1)
    lo = np.floor(c).astype(np.int64)
    hi = np.minimum(lo + 1, start + length - 1)
    return lo, hi, c - lo


def sample_windows(image, windows, out_h, out_w=None):
    """Bilinearly resample rectangular windows ``(x0, y0, x1, y1)`` of ``image``.

    Returns a float array of shape ``(len(windows), out_h, out_w, C)``.
    """
    out_w = out_h if out_w is None else out_w
    img = as_float(image)
    windows = np.asarray(windows, dtype=np.int64).reshape(-1, 4)
    n = len(windows)
    x0, y0, x1, y1 = (windows[:, i:i + 1] for i in range(4))
    y_lo, y_hi, fy = _sample_coords(y0, y1 - y0, out_h)
    x_lo, x_hi, fx = _sample_coords(x0, x1 - x0, out_w)
    y_lo, y_hi, fy = y_lo.reshape(n, out_h, 1), y_hi.reshape(n, out_h, 1), fy.reshape(n, out_h, 1, 1)
    x_lo, x_hi, fx = x_lo.reshape(n, 1, out_w), x_hi.reshape(n, 1, out_w), fx.reshape(n, 1, out_w, 1)
    top = img[y_lo, x_lo] * (1 - fx) + img[y_lo, x_hi] * fx
    bottom = img[y_hi, x_lo] * (1 - fx) + img[y_hi, x_hi] * fx
    return top * (1 - fy) + bottom * fy


def resize_bilinear(image, out_h, out_w=None):
    h, w = np.asarray(image).shape[:2]
    return sample_windows(image, [(0, 0, w, h)], out_h, out_w)[0]


def fit_to_canvas(image, height, width):
    """Centre-crop ``image`` to the canvas aspect ratio, then resize bilinearly."""
    h, w = np.asarray(image).shape[:2]
    if w * height > h * width:
        cw = max(1, int(round(h * width / height)))
        x0 = (w - cw) // 2
        window = (x0, 0, x0 + cw, h)
    else:
        ch = max(1, int(round(w * height / width)))
        y0 = (h - ch) // 2
        window = (0, y0, w, y0 + ch)
    return sample_windows(image, [window], height, width)[0]


def write_image(path, image):
    """Write an RGB image losslessly (binary PPM, or PNG by suffix)."""
    path = Path(path)
    data = as_uint8(image)[..., :3]
    if path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(data, mode="RGB").save(path, format="PNG")
        return
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(data).tobytes())


def _ppm_tokens(raw, count):
    tokens, pos = [], 2
    while len(tokens) < count:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(raw[start:pos]))
    return tokens, pos + 1


def read_image(path):
    """Read a PPM (P6) or PNG file as an ``(H, W, 3)`` uint8 array."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"P6":
        (w, h, maxval), offset = _ppm_tokens(raw, 3)
        if maxval != 255:
            raise ValueError(f"{path}: only 8-bit PPM is supported")
        data = np.frombuffer(raw, dtype=np.uint8, count=w * h * 3, offset=offset)
        return data.reshape(h, w, 3).copy()
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
