"""Bit-exact PPM/PGM and PFM file I/O plus the two resampling modes the
pipeline needs (plain bilinear for images, validity-aware resizing with
value scaling for disparity-like maps).

Validity convention for float maps on disk: value > 0 is valid, <= 0 is
invalid/unknown. In memory a FloatMap carries an explicit boolean mask so a
legitimately zero disparity can still be marked valid.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ImageFormatError(IOError):
    pass


@dataclass
class Image:
    """Row-major, channel-interleaved float64 image with values in [0, 1]."""

    data: np.ndarray  # (H, W, C), C in {1, 3}

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] not in (1, 3):
            raise ImageFormatError(f"image must be (H, W, 1|3), got {self.data.shape}")
        self.data = np.clip(np.asarray(self.data, dtype=np.float64), 0.0, 1.0)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def gray(self) -> np.ndarray:
        """Channel-mean luminance, (H, W)."""
        return self.data.mean(axis=2)


@dataclass
class FloatMap:
    """Scalar map (disparity, confidence, depth) with per-pixel validity."""

    data: np.ndarray  # (H, W) float64, finite
    valid: np.ndarray = field(default=None)  # (H, W) bool

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ImageFormatError(f"float map must be 2-D, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ImageFormatError("float map contains non-finite values")
        if self.valid is None:
            self.valid = self.data > 0.0
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.data.shape:
                raise ImageFormatError("validity mask shape mismatch")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "FloatMap":
        return FloatMap(self.data.copy(), self.valid.copy())


# -- PPM / PGM (binary, maxval 255) ---------------------------------------------


def _read_pnm_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    """First `count` whitespace-separated header tokens, skipping # comments."""
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        if i >= len(raw):
            raise ImageFormatError("truncated PNM header")
        c = raw[i : i + 1]
        if c == b"#":
            while i < len(raw) and raw[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j : j + 1].isspace() and raw[j : j + 1] != b"#":
                j += 1
            tokens.append(raw[i:j])
            i = j
    # exactly one whitespace byte separates the header from the payload
    if i >= len(raw) or not raw[i : i + 1].isspace():
        raise ImageFormatError("malformed PNM header terminator")
    return tokens, i + 1


def read_ppm(path) -> Image:
    """Read a binary PPM (P6) or PGM (P5) with maxval 255."""
    raw = Path(path).read_bytes()
    tokens, off = _read_pnm_tokens(raw, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"{path}: unsupported PNM magic {magic!r}")
    channels = 3 if magic == b"P6" else 1
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as e:
        raise ImageFormatError(f"{path}: bad PNM header: {e}") from e
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 supported, got {maxval}")
    need = w * h * channels
    payload = raw[off : off + need]
    if len(payload) != need:
        raise ImageFormatError(
            f"{path}: truncated payload, expected {need} bytes, got {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, channels)
    return Image(arr.astype(np.float64) / 255.0)


def write_ppm(path, img: Image) -> None:
    """Write P6 (3-channel) or P5 (1-channel), maxval 255."""
    magic = b"P6" if img.channels == 3 else b"P5"
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    quant = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    Path(path).write_bytes(header + quant.tobytes())


# -- PFM (grayscale, little-endian) ------------------------------------------------


def read_pfm(path) -> FloatMap:
    raw = Path(path).read_bytes()
    tokens, off = _read_pnm_tokens(raw, 4)
    if tokens[0] == b"PF":
        raise ImageFormatError(f"{path}: color PFM not supported")
    if tokens[0] != b"Pf":
        raise ImageFormatError(f"{path}: not a PFM file (magic {tokens[0]!r})")
    try:
        w, h = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError as e:
        raise ImageFormatError(f"{path}: bad PFM header: {e}") from e
    if scale >= 0:
        raise ImageFormatError(
            f"{path}: big-endian PFM (scale {scale}) not supported"
        )
    need = w * h * 4
    payload = raw[off : off + need]
    if len(payload) != need:
        raise ImageFormatError(
            f"{path}: truncated payload, expected {need} bytes, got {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(h, w)
    # PFM rows are stored bottom-up
    return FloatMap(arr[::-1].astype(np.float64))


def write_pfm(path, fmap: FloatMap) -> None:
    """Write grayscale little-endian PFM.

    Invalid pixels must already carry a non-positive sentinel in .data; a
    valid pixel with non-positive value cannot survive the disk convention.
    """
    header = b"Pf\n%d %d\n-1.0\n" % (fmap.width, fmap.height)
    payload = fmap.data[::-1].astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_pgm_labels(path) -> np.ndarray:
    """Read a PGM written by write_pgm_labels back to an int map."""
    img = read_ppm(path)
    return np.rint(img.data[:, :, 0] * 255.0).astype(np.int64)


def write_pgm_labels(path, labels: np.ndarray) -> None:
    """Store small non-negative integer maps (masks, class labels) as PGM."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 255:
        raise ImageFormatError("label values must lie in [0, 255]")
    write_ppm(path, Image(labels[:, :, None].astype(np.float64) / 255.0))


# -- resampling ---------------------------------------------------------------


def _bilinear_coords(new_n: int, old_n: int):
    src = (np.arange(new_n) + 0.5) * (old_n / new_n) - 0.5
    src = np.clip(src, 0.0, old_n - 1.0)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, old_n - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear_image(img: Image, new_w: int, new_h: int) -> Image:
    """Standard separable bilinear resize with edge clamping."""
    if new_w < 1 or new_h < 1:
        raise ImageFormatError("resize: target dims must be >= 1")
    if (new_w, new_h) == (img.width, img.height):
        return Image(img.data.copy())
    x0, x1, fx = _bilinear_coords(new_w, img.width)
    y0, y1, fy = _bilinear_coords(new_h, img.height)
    d = img.data
    top = d[y0][:, x0] * (1 - fx)[None, :, None] + d[y0][:, x1] * fx[None, :, None]
    bot = d[y1][:, x0] * (1 - fx)[None, :, None] + d[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return Image(out)


def resize_disparity(fmap: FloatMap, new_w: int, new_h: int) -> FloatMap:
    """Resize a disparity-like map, scaling values by new_w / old_w.

    Downsampling averages only valid source pixels per target cell; a cell
    with no valid source pixel becomes invalid. Upsampling interpolates
    bilinearly with invalid neighbors dropped from the weighting.
    """
    if new_w < 1 or new_h < 1:
        raise ImageFormatError("resize: target dims must be >= 1")
    h, w = fmap.data.shape
    scale = new_w / w
    if (new_w, new_h) == (w, h):
        return fmap.copy()
    if new_w <= w and new_h <= h:
        cell_x = (np.arange(w) * new_w) // w
        cell_y = (np.arange(h) * new_h) // h
        flat_cell = (cell_y[:, None] * new_w + cell_x[None, :]).ravel()
        v = fmap.valid.ravel()
        sums = np.bincount(flat_cell[v], weights=fmap.data.ravel()[v], minlength=new_w * new_h)
        counts = np.bincount(flat_cell[v], minlength=new_w * new_h)
        valid = counts > 0
        data = np.full(new_w * new_h, -1.0)
        data[valid] = sums[valid] / counts[valid] * scale
        return FloatMap(data.reshape(new_h, new_w), valid.reshape(new_h, new_w))
    # upsample: validity-weighted bilinear
    x0, x1, fx = _bilinear_coords(new_w, w)
    y0, y1, fy = _bilinear_coords(new_h, h)
    vals = np.zeros((new_h, new_w))
    wsum = np.zeros((new_h, new_w))
    for ys, wy in ((y0, 1 - fy), (y1, fy)):
        for xs, wx in ((x0, 1 - fx), (x1, fx)):
            wgt = wy[:, None] * wx[None, :] * fmap.valid[ys][:, xs]
            vals += wgt * fmap.data[ys][:, xs]
            wsum += wgt
    valid = wsum > 0
    data = np.full((new_h, new_w), -1.0)
    data[valid] = vals[valid] / wsum[valid] * scale
    return FloatMap(data, valid)


def resize_bilinear(obj, new_w: int, new_h: int, mode: str = "image"):
    """Mode dispatcher: 'image' for Image, 'disparity' for FloatMap."""
    if mode == "image":
        return resize_bilinear_image(obj, new_w, new_h)
    if mode == "disparity":
        return resize_disparity(obj, new_w, new_h)
    raise ImageFormatError(f"unknown resize mode '{mode}'")
