"""Grayscale image container, binary PGM I/O, resampling and filter primitives.

Intensities live in [0, 1] as float64. Quantization to 8-bit levels uses
round-half-up so files and histograms are reproducible across platforms.
All spatial filters use symmetric (reflect) border handling.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DimensionError, IoError, ParseError, TruncationError

# ITU-R BT.601 luma coefficients, applied when importing color sources.
BT601_LUMA = (0.299, 0.587, 0.114)


def quantize8(values):
    """Map [0, 1] floats to 8-bit levels with round-half-up."""
    return np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5).astype(np.uint8)


class Task(str, Enum):
    """Fusion task families a source pair can belong to."""

    MULTI_EXPOSURE = "multi_exposure"
    MULTI_FOCUS = "multi_focus"
    MEDICAL = "medical"
    IR_VISIBLE = "ir_visible"
    CVS = "cvs"


@dataclass(frozen=True, eq=False)
class ImageGray:
    """Single-channel raster; ``data`` is (height, width) float64 in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"expected 2-D intensity grid, got ndim={arr.ndim}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"degenerate image shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite intensities")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"intensities outside [0, 1]: min={lo}, max={hi}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def allclose(self, other: "ImageGray", tol: float = 1e-9) -> bool:
        if self.shape != other.shape:
            return False
        return bool(np.max(np.abs(self.data - other.data)) <= tol)


@dataclass(frozen=True, eq=False)
class ImagePair:
    """Aligned source pair; ``a`` and ``b`` must share dimensions."""

    a: ImageGray
    b: ImageGray
    pair_id: str
    task: Task = Task.IR_VISIBLE

    def __post_init__(self):
        if self.a.shape != self.b.shape:
            raise DimensionError(
                f"pair {self.pair_id!r}: source shapes differ {self.a.shape} vs {self.b.shape}"
            )

    @property
    def height(self) -> int:
        return self.a.height

    @property
    def width(self) -> int:
        return self.a.width


# ---------------------------------------------------------------------------
# Binary PGM (P5) is the bit-exact interchange format of this toolkit.
# ---------------------------------------------------------------------------

_WS = b" \t\r\n"


def _header_tokens(blob):
    """First four whitespace-separated header tokens and the payload offset.

    '#' starts a comment running to end of line, as allowed by the PGM
    grammar. Exactly one whitespace byte separates maxval from the raster.
    """
    tokens = []
    i, n = 0, len(blob)
    while len(tokens) < 4 and i < n:
        c = blob[i : i + 1]
        if c in _WS:
            i += 1
        elif c == b"#":
            j = blob.find(b"\n", i)
            i = n if j < 0 else j + 1
        else:
            j = i
            while j < n and blob[j : j + 1] not in _WS and blob[j : j + 1] != b"#":
                j += 1
            tokens.append(blob[i:j])
            i = j
    if len(tokens) < 4:
        raise ParseError("incomplete PGM header")
    if i >= n or blob[i : i + 1] not in _WS:
        raise ParseError("missing whitespace after maxval")
    return tokens, i + 1


def load_pgm(path) -> ImageGray:
    """Read a binary PGM (P5) file with maxval 255 or 65535."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    tokens, offset = _header_tokens(blob)
    if tokens[0] != b"P5":
        raise ParseError(f"unsupported magic {tokens[0]!r}, expected P5")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise ParseError(f"non-numeric header field: {exc}") from exc
    if width < 1 or height < 1:
        raise ParseError(f"bad dimensions {width}x{height}")
    if maxval not in (255, 65535):
        raise ParseError(f"unsupported maxval {maxval}")
    bytes_per_px = 1 if maxval == 255 else 2
    need = width * height * bytes_per_px
    payload = blob[offset : offset + need]
    if len(payload) < need:
        raise TruncationError(f"expected {need} raster bytes, found {len(payload)}")
    dtype = np.uint8 if maxval == 255 else np.dtype(">u2")
    raw = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return ImageGray(raw.astype(np.float64) / maxval)


def save_pgm(img: ImageGray, path) -> None:
    """Write a binary PGM (P5), maxval 255, round-half-up quantization."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + quantize8(img.data).tobytes())
    except OSError as exc:
        raise IoError(str(exc)) from exc


def rgb_to_gray(rgb) -> np.ndarray:
    """BT.601 luma of an (h, w, 3) array; uint8 inputs are scaled to [0, 1]."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"expected (h, w, 3) color array, got {arr.shape}")
    arr = arr.astype(np.float64)
    if arr.max() > 1.0:
        arr = arr / 255.0
    return np.clip(arr @ np.asarray(BT601_LUMA), 0.0, 1.0)


def load_image(path) -> ImageGray:
    """PGM natively; other formats through the optional Pillow adapter."""
    p = Path(path)
    if p.suffix.lower() in (".pgm", ".pnm"):
        return load_pgm(p)
    try:
        from PIL import Image  # optional adapter, never the reference path
    except ImportError as exc:
        raise IoError(f"Pillow is required to read {p.suffix} files") from exc
    try:
        with Image.open(p) as im:
            rgb = np.asarray(im.convert("RGB"))
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return ImageGray(rgb_to_gray(rgb))


def load_pairs(directory, task: Task = Task.IR_VISIBLE) -> list[ImagePair]:
    """Load ``<id>_a.pgm`` / ``<id>_b.pgm`` pairs from a directory, sorted by id."""
    root = Path(directory)
    if not root.is_dir():
        raise IoError(f"not a directory: {root}")
    pairs = []
    for a_path in sorted(root.glob("*_a.pgm")):
        pair_id = a_path.name[: -len("_a.pgm")]
        b_path = root / f"{pair_id}_b.pgm"
        if not b_path.exists():
            raise IoError(f"missing partner file {b_path}")
        pairs.append(ImagePair(load_pgm(a_path), load_pgm(b_path), pair_id, task))
    return pairs


# ---------------------------------------------------------------------------
# Resampling and patch extraction
# ---------------------------------------------------------------------------


def resize_bilinear(img: ImageGray, out_w: int, out_h: int) -> ImageGray:
    """Bilinear resample with half-pixel-center coordinate mapping."""
    if out_w < 1 or out_h < 1:
        raise DimensionError(f"target size must be >= 1, got {out_w}x{out_h}")
    src = img.data
    h, w = src.shape
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    out = (
        (1.0 - fy) * (1.0 - fx) * src[np.ix_(y0, x0)]
        + (1.0 - fy) * fx * src[np.ix_(y0, x1)]
        + fy * (1.0 - fx) * src[np.ix_(y1, x0)]
        + fy * fx * src[np.ix_(y1, x1)]
    )
    return ImageGray(np.clip(out, 0.0, 1.0))


def tile_grid(height: int, width: int, size: int, stride: int) -> list[tuple[int, int]]:
    """Top-left corners of the aligned patch tiling; tail rows/cols are dropped."""
    if stride < 1:
        raise DimensionError(f"stride must be >= 1, got {stride}")
    if size > height or size > width:
        raise DimensionError(f"patch size {size} exceeds image {height}x{width}")
    return [
        (y, x)
        for y in range(0, height - size + 1, stride)
        for x in range(0, width - size + 1, stride)
    ]


def extract_patches(pair: ImagePair, size: int = 128, stride: int = 128) -> list[ImagePair]:
    """Co-located patches from both sources.

    Patch count is (floor((H-size)/stride)+1) * (floor((W-size)/stride)+1).
    """
    out = []
    for y, x in tile_grid(pair.height, pair.width, size, stride):
        sub_a = ImageGray(pair.a.data[y : y + size, x : x + size])
        sub_b = ImageGray(pair.b.data[y : y + size, x : x + size])
        out.append(ImagePair(sub_a, sub_b, f"{pair.pair_id}:{y}+{x}", pair.task))
    return out


# ---------------------------------------------------------------------------
# Shared spatial-filter primitives
# ---------------------------------------------------------------------------


def filter2_same(img, kernel) -> np.ndarray:
    """Correlate with an odd 2-D kernel, reflect borders, same-size output.

    Accepts an ImageGray or a raw 2-D array; the output is a raw float grid
    and may leave [0, 1].
    """
    arr = img.data if isinstance(img, ImageGray) else np.asarray(img, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2:
        raise DimensionError(f"kernel must be 2-D, got ndim={k.ndim}")
    if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise DimensionError(f"kernel dims must be odd, got {k.shape}")
    return ndimage.correlate(arr, k, mode="reflect")


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Normalized 2-D Gaussian window with odd side length."""
    if size % 2 == 0:
        raise DimensionError(f"window size must be odd, got {size}")
    r = size // 2
    g = np.exp(-0.5 * (np.arange(-r, r + 1, dtype=np.float64) / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()
