"""Raster image containers, PGM/PPM IO and low-level vision primitives.

Everything in here is a pure function over immutable inputs: grayscale
conversion, Otsu binarization, morphological closing and connected-component
labeling. These are the building blocks shared by the plate localizer and
the character reader.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage


class ImagingError(Exception):
    """Base class for imaging failures."""


class DegenerateHistogram(ImagingError):
    """All pixels share one intensity; no threshold separates two classes."""


class MalformedHeader(ImagingError):
    """PGM/PPM header could not be parsed."""


class TruncatedData(ImagingError):
    """PGM/PPM raster is shorter than width*height*channels."""


class UnsupportedMaxval(ImagingError):
    """Only maxval 255 files are supported."""


@dataclass(frozen=True, eq=False)
class Image:
    """Row-major 8-bit raster, 1 (gray) or 3 (RGB) channels.

    pixels has shape (height, width, channels), dtype uint8.
    """

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) array, got shape {p.shape}")
        if p.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {p.dtype}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must be at least 1x1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel 8-bit raster, shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 2:
            raise ValueError(f"expected (h, w) array, got shape {p.shape}")
        if p.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {p.dtype}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must be at least 1x1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def as_image(self) -> Image:
        return Image(self.pixels[:, :, np.newaxis].copy())


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Per-pixel values strictly in {0, 1}; 1 is foreground."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 2:
            raise ValueError(f"expected (h, w) array, got shape {p.shape}")
        if p.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {p.dtype}")
        if p.size and p.max() > 1:
            raise ValueError("binary image values must be 0 or 1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class ComponentLabels:
    """Dense component labels, 0 = background, assigned in row-major
    first-visit order."""

    labels: np.ndarray
    component_count: int

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class ComponentStats:
    """Bounding box, pixel count and fill ratio of one labeled component."""

    label: int
    bbox: tuple[int, int, int, int]  # x, y, w, h
    area: int
    fill_ratio: float


def to_grayscale(img: Image) -> GrayImage:
    """Luma conversion, Y = round(0.299 R + 0.587 G + 0.114 B), round half up.

    1-channel input is copied byte for byte.
    """
    if img.channels == 1:
        return GrayImage(img.pixels[:, :, 0].copy())
    p = img.pixels.astype(np.float64)
    y = p[:, :, 0] * 0.299 + p[:, :, 1] * 0.587 + p[:, :, 2] * 0.114
    return GrayImage(np.floor(y + 0.5).astype(np.uint8))


def otsu_threshold(img: GrayImage) -> tuple[int, BinaryImage]:
    """Threshold maximizing between-class variance; foreground = intensity > t.

    The argmax is computed in exact integer arithmetic so ties are broken
    by the smallest threshold with no float round-off ambiguity.
    """
    flat = img.pixels.ravel()
    hist = np.bincount(flat, minlength=256)
    if int(np.count_nonzero(hist)) < 2:
        raise DegenerateHistogram("all pixels share one intensity")

    counts = hist.tolist()
    total = len(flat)
    total_sum = int(np.dot(hist, np.arange(256, dtype=np.int64)))

    # between-class variance at t is (s0*w1 - s1*w0)^2 / (w0*w1), compared
    # exactly via cross-multiplication of the rational values
    best_t = 0
    best_num = -1
    best_den = 1
    w0 = 0
    s0 = 0
    for t in range(256):
        w0 += counts[t]
        s0 += t * counts[t]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        s1 = total_sum - s0
        num = (s0 * w1 - s1 * w0) ** 2
        den = w0 * w1
        if num * best_den > best_num * den:
            best_num = num
            best_den = den
            best_t = t

    bin_img = BinaryImage((img.pixels > best_t).astype(np.uint8))
    return best_t, bin_img


def _dilate(pixels: np.ndarray, kernel_w: int, kernel_h: int) -> np.ndarray:
    pw, ph = kernel_w // 2, kernel_h // 2
    padded = np.pad(pixels, ((ph, ph), (pw, pw)), constant_values=0)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kernel_h, kernel_w))
    return windows.max(axis=(2, 3))


def _erode(pixels: np.ndarray, kernel_w: int, kernel_h: int) -> np.ndarray:
    pw, ph = kernel_w // 2, kernel_h // 2
    padded = np.pad(pixels, ((ph, ph), (pw, pw)), constant_values=0)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kernel_h, kernel_w))
    return windows.min(axis=(2, 3))


def morph_close(bin_img: BinaryImage, kernel_w: int, kernel_h: int) -> BinaryImage:
    """Dilation then erosion with a kernel_w x kernel_h rectangle.

    Out-of-bounds pixels count as 0 for both passes, which keeps the
    operation idempotent on the bounded grid.
    """
    if kernel_w < 1 or kernel_h < 1 or kernel_w % 2 == 0 or kernel_h % 2 == 0:
        raise ValueError("kernel dimensions must be odd and >= 1")
    dilated = _dilate(bin_img.pixels, kernel_w, kernel_h)
    return BinaryImage(_erode(dilated, kernel_w, kernel_h).astype(np.uint8))


_EIGHT_CONN = np.ones((3, 3), dtype=np.uint8)


def connected_components(bin_img: BinaryImage) -> ComponentLabels:
    """8-connected labeling, labels dense and in row-major first-visit order."""
    raw, n = ndimage.label(bin_img.pixels, structure=_EIGHT_CONN)
    if n == 0:
        return ComponentLabels(np.zeros_like(bin_img.pixels, dtype=np.int32), 0)
    # remap to row-major first-visit order regardless of the labeler's internals
    flat = raw.ravel()
    first_seen = np.full(n + 1, flat.size, dtype=np.int64)
    np.minimum.at(first_seen, flat, np.arange(flat.size, dtype=np.int64))
    order = np.argsort(first_seen[1:], kind="stable")  # old labels 1..n by first visit
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, n + 1, dtype=np.int32)
    return ComponentLabels(remap[raw], n)


def component_stats(comp: ComponentLabels) -> list[ComponentStats]:
    """Per-component bounding box, area and bbox fill ratio, by label order."""
    n = comp.component_count
    if n == 0:
        return []
    slices = ndimage.find_objects(comp.labels, max_label=n)
    areas = np.bincount(comp.labels.ravel(), minlength=n + 1)
    out = []
    for label in range(1, n + 1):
        sl = slices[label - 1]
        y, x = sl[0].start, sl[1].start
        h, w = sl[0].stop - y, sl[1].stop - x
        area = int(areas[label])
        out.append(ComponentStats(label, (x, y, w, h), area, area / float(w * h)))
    return out


_TOKEN_RE = re.compile(rb"^(P[56])\s(\d+)\s(\d+)\s(\d+)\s", re.ASCII)


def read_image(path: str | Path) -> Image:
    """Read a binary PGM (P5) or PPM (P6) file with maxval 255."""
    data = Path(path).read_bytes()
    m = _TOKEN_RE.match(data)
    if m is None:
        # tolerate runs of whitespace between header fields
        loose = re.match(rb"^(P[56])\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
        if loose is None:
            raise MalformedHeader(f"{path}: not a binary PGM/PPM header")
        m = loose
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise UnsupportedMaxval(f"{path}: maxval {maxval}, expected 255")
    if w < 1 or h < 1:
        raise MalformedHeader(f"{path}: bad dimensions {w}x{h}")
    channels = 1 if magic == b"P5" else 3
    body = data[m.end():]
    need = w * h * channels
    if len(body) < need:
        raise TruncatedData(f"{path}: need {need} raster bytes, found {len(body)}")
    pixels = np.frombuffer(body[:need], dtype=np.uint8).reshape(h, w, channels)
    return Image(pixels.copy())


def write_image(img: Image | GrayImage, path: str | Path) -> None:
    """Write binary PGM for 1-channel input, binary PPM for 3-channel."""
    if isinstance(img, GrayImage):
        img = img.as_image()
    magic = "P5" if img.channels == 1 else "P6"
    header = f"{magic} {img.width} {img.height} 255\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.tobytes())


def read_gray(path: str | Path) -> GrayImage:
    """Read any supported file and return its luma plane."""
    return to_grayscale(read_image(path))
