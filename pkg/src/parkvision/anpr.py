"""Plate localization and rectification.

The detector is a fixed classical chain: luma -> 3x3 Sobel magnitude (L1,
clamped) -> Otsu on the gradient -> 9x3 morphological closing -> connected
components -> geometric filtering. Anything that detects plates (this chain,
or an external model behind `SubprocessRecognizer`) satisfies the same
`Recognizer` protocol so the evaluator does not care which one it drives.
"""

from __future__ import annotations

import json
import math
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .imaging import (
    BinaryImage,
    DegenerateHistogram,
    GrayImage,
    Image,
    component_stats,
    connected_components,
    morph_close,
    otsu_threshold,
    read_image,
    to_grayscale,
)

MIN_IMAGE_W = 64
MIN_IMAGE_H = 32
NORMALIZED_W = 256
NORMALIZED_H = 64

ASPECT_MIN = 2.0
ASPECT_MAX = 6.0
AREA_MIN_FRACTION = 0.001
AREA_MAX_FRACTION = 0.10
FILL_MIN = 0.4
IOU_HIT = 0.7


class AnprError(Exception):
    pass


class ImageTooSmall(AnprError):
    pass


class DegenerateCrop(AnprError):
    pass


class MissingImage(AnprError):
    pass


@dataclass(frozen=True)
class Detection:
    bbox: tuple[int, int, int, int]  # x, y, w, h
    angle: float = 0.0  # estimated skew, degrees (y-down slope sense)
    score: float = 0.0


@dataclass(frozen=True, eq=False)
class NormalizedPlate:
    image: GrayImage  # exactly 256x64, full [0,255] range
    source_bbox: Detection


def iou(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    """Intersection over union of two (x, y, w, h) boxes; 0 when disjoint."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    if inter <= 0:
        return 0.0
    union = aw * ah + bw * bh - inter
    return inter / union


def sobel_magnitude(gray: GrayImage) -> GrayImage:
    """|Gx| + |Gy| of the 3x3 Sobel pair, clamped to 255, edges replicated."""
    p = np.pad(gray.pixels.astype(np.int32), 1, mode="edge")
    gx = ((p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:])
          - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2]))
    gy = ((p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:])
          - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:]))
    mag = np.abs(gx) + np.abs(gy)
    return GrayImage(np.minimum(mag, 255).astype(np.uint8))


def _aspect_fit(aspect: float) -> float:
    return max(0.0, 1.0 - abs(aspect - 4.0) / 4.0)


def localize_plates(img: Image) -> list[Detection]:
    """Candidate plate boxes, sorted by descending score, ties by top-left."""
    if img.width < MIN_IMAGE_W or img.height < MIN_IMAGE_H:
        raise ImageTooSmall(f"{img.width}x{img.height} below {MIN_IMAGE_W}x{MIN_IMAGE_H}")
    gray = to_grayscale(img)
    grad = sobel_magnitude(gray)
    try:
        _, edges = otsu_threshold(grad)
    except DegenerateHistogram:
        return []  # no gradient energy anywhere
    closed = morph_close(edges, 9, 3)
    comps = connected_components(closed)
    image_area = img.width * img.height
    grad_f = grad.pixels.astype(np.float64)

    dets = []
    for stat in component_stats(comps):
        x, y, w, h = stat.bbox
        if w < 8 or h < 8:
            continue
        aspect = w / h
        if not (ASPECT_MIN <= aspect <= ASPECT_MAX):
            continue
        if not (AREA_MIN_FRACTION * image_area <= stat.area <= AREA_MAX_FRACTION * image_area):
            continue
        if stat.fill_ratio < FILL_MIN:
            continue
        edge_density = float(grad_f[y:y + h, x:x + w].mean()) / 255.0
        score = edge_density * _aspect_fit(aspect)
        dets.append(Detection(bbox=(x, y, w, h), angle=0.0, score=score))
    dets.sort(key=lambda d: (-d.score, d.bbox[1], d.bbox[0]))
    return dets


def _bilinear(p: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Sample float image p at pixel-center coords, clamped to the edges."""
    h, w = p.shape
    px = np.clip(px, 0, w - 1)
    py = np.clip(py, 0, h - 1)
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = px - x0
    fy = py - y0
    return (p[y0, x0] * (1 - fx) * (1 - fy) + p[y0, x1] * fx * (1 - fy)
            + p[y1, x0] * (1 - fx) * fy + p[y1, x1] * fx * fy)


def rotate_about_center(p: np.ndarray, phi_deg: float,
                        out_w: int | None = None, out_h: int | None = None) -> np.ndarray:
    """Rotate float image content by phi (y-down sense) about its center.

    The output canvas defaults to the input size; passing a smaller one
    crops symmetrically around the center after rotation.
    """
    h, w = p.shape
    out_w = w if out_w is None else out_w
    out_h = h if out_h is None else out_h
    phi = math.radians(phi_deg)
    c, s = math.cos(phi), math.sin(phi)
    jj, ii = np.meshgrid(np.arange(out_w, dtype=np.float64), np.arange(out_h, dtype=np.float64))
    dx = jj - (out_w - 1) / 2.0
    dy = ii - (out_h - 1) / 2.0
    px = c * dx + s * dy + (w - 1) / 2.0
    py = -s * dx + c * dy + (h - 1) / 2.0
    return _bilinear(p, px, py)


def derotated_extent(crop_w: int, crop_h: int, phi_deg: float) -> tuple[int, int]:
    """Tight upright size of a rectangle whose rotation by phi has the given
    axis-aligned extent. Falls back to the crop size for implausible input."""
    c = abs(math.cos(math.radians(phi_deg)))
    s = abs(math.sin(math.radians(phi_deg)))
    det = c * c - s * s
    if det < 0.5:
        return crop_w, crop_h
    w = (crop_w * c - crop_h * s) / det
    h = (crop_h * c - crop_w * s) / det
    if w < 16 or h < 8:
        return crop_w, crop_h
    return math.ceil(w), math.ceil(h)


def resize_bilinear(p: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    h, w = p.shape
    px = (np.arange(out_w, dtype=np.float64) + 0.5) * w / out_w - 0.5
    py = (np.arange(out_h, dtype=np.float64) + 0.5) * h / out_h - 0.5
    return _bilinear(p, px[np.newaxis, :], py[:, np.newaxis])


def estimate_skew(crop: np.ndarray) -> float:
    """Skew in degrees from a least-squares line through the per-column
    centroids of the binarized foreground (the text band's long axis)."""
    try:
        _, bin_img = otsu_threshold(GrayImage(crop))
    except DegenerateHistogram:
        return 0.0
    mask = bin_img.pixels.astype(bool)
    if mask.sum() * 2 > mask.size:
        mask = ~mask  # foreground = minority class
    cols = np.nonzero(mask.any(axis=0))[0]
    if cols.size < 8:
        return 0.0
    ys = np.arange(crop.shape[0], dtype=np.float64)
    counts = mask[:, cols].sum(axis=0)
    centroids = (ys[:, np.newaxis] * mask[:, cols]).sum(axis=0) / counts
    x = cols.astype(np.float64)
    var_x = np.var(x)
    if var_x == 0:
        return 0.0
    slope = np.mean((x - x.mean()) * (centroids - centroids.mean())) / var_x
    angle = math.degrees(math.atan(slope))
    return max(-15.0, min(15.0, angle))


def rectify_and_normalize(img: Image, det: Detection) -> NormalizedPlate:
    """Crop with margin, undo estimated skew, resize to 256x64 and stretch
    contrast to the full [0, 255] range."""
    x, y, w, h = det.bbox
    if x < 0 or y < 0 or x + w > img.width or y + h > img.height:
        raise ValueError(f"detection bbox {det.bbox} outside {img.width}x{img.height} image")
    gray = to_grayscale(img)
    x0 = max(0, x - 4)
    y0 = max(0, y - 4)
    x1 = min(img.width, x + w + 4)
    y1 = min(img.height, y + h + 4)
    crop = gray.pixels[y0:y1, x0:x1]
    if crop.min() == crop.max():
        raise DegenerateCrop("crop has zero intensity variance")

    angle = estimate_skew(crop)
    # undoing the skew leaves the plate upright inside the crop; shrink the
    # canvas to the derotated rectangle (plus slack for estimate error) so
    # the resize does not squeeze characters with the empty corners
    out_w, out_h = derotated_extent(crop.shape[1], crop.shape[0], angle)
    out_w = min(crop.shape[1], out_w + 6)
    out_h = min(crop.shape[0], out_h + 6)
    rotated = rotate_about_center(crop.astype(np.float64), -angle, out_w, out_h)
    resized = resize_bilinear(rotated, NORMALIZED_W, NORMALIZED_H)
    lo, hi = resized.min(), resized.max()
    if hi - lo < 1e-9:
        raise DegenerateCrop("crop has zero intensity variance")
    stretched = np.floor((resized - lo) * 255.0 / (hi - lo) + 0.5).astype(np.uint8)
    return NormalizedPlate(
        image=GrayImage(stretched),
        source_bbox=Detection(bbox=det.bbox, angle=angle, score=det.score),
    )


@runtime_checkable
class Recognizer(Protocol):
    """Anything that finds plates: the classical chain or an external model."""

    name: str

    def detect(self, img: Image) -> list[Detection]: ...


class ClassicalRecognizer:
    name = "classical-edge"

    def detect(self, img: Image) -> list[Detection]:
        return localize_plates(img)


class SubprocessRecognizer:
    """Adapter for an out-of-process detector (e.g. a neural model server).

    The command is invoked with the image path appended and must print one
    JSON object per detection: {"bbox": [x, y, w, h], "score": s}.
    """

    def __init__(self, command: list[str], name: str = "external"):
        self.command = list(command)
        self.name = name

    def detect_path(self, image_path: str | Path) -> list[Detection]:
        proc = subprocess.run(self.command + [str(image_path)],
                              capture_output=True, text=True, check=True)
        dets = []
        for line in proc.stdout.splitlines():
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            dets.append(Detection(bbox=tuple(rec["bbox"]), score=float(rec.get("score", 0.0))))
        dets.sort(key=lambda d: (-d.score, d.bbox[1], d.bbox[0]))
        return dets

    def detect(self, img: Image) -> list[Detection]:
        raise NotImplementedError("SubprocessRecognizer works on paths; use detect_path")


@dataclass
class TierStats:
    count: int = 0
    hits: int = 0
    iou_sum: float = 0.0
    elapsed_sum: float = 0.0

    @property
    def detection_rate(self) -> float:
        return self.hits / self.count if self.count else 0.0

    @property
    def mean_iou(self) -> float:
        return self.iou_sum / self.count if self.count else 0.0

    @property
    def mean_elapsed_ms(self) -> float:
        return 1000.0 * self.elapsed_sum / self.count if self.count else 0.0


@dataclass
class DetectorReport:
    recognizer: str
    tiers: dict[str, TierStats] = field(default_factory=dict)
    records: list[dict] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.tiers

    def summary(self) -> list[dict]:
        if self.empty:
            return [{"summary": True, "recognizer": self.recognizer, "status": "EmptyManifest"}]
        return [
            {
                "summary": True,
                "recognizer": self.recognizer,
                "tier": tier,
                "count": st.count,
                "detection_rate": round(st.detection_rate, 4),
                "mean_iou": round(st.mean_iou, 4),
                "mean_elapsed_ms": round(st.mean_elapsed_ms, 3),
            }
            for tier, st in sorted(self.tiers.items())
        ]

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")
            for rec in self.summary():
                fh.write(json.dumps(rec) + "\n")


def evaluate_detector(recognizer: Recognizer, entries, images_dir: str | Path) -> DetectorReport:
    """Per-tier detection rate (IoU >= 0.7 counts as a hit), mean best-IoU
    and mean per-image wall time, in manifest order."""
    report = DetectorReport(recognizer=getattr(recognizer, "name", "unknown"))
    images_dir = Path(images_dir)
    for entry in entries:
        path = images_dir / entry.image_path
        if not path.exists():
            raise MissingImage(str(path))
        img = read_image(path)
        t0 = time.perf_counter()
        dets = recognizer.detect(img)
        elapsed = time.perf_counter() - t0
        best = max((iou(d.bbox, entry.truth_bbox) for d in dets), default=0.0)
        st = report.tiers.setdefault(entry.noise_tier, TierStats())
        st.count += 1
        st.hits += int(best >= IOU_HIT)
        st.iou_sum += best
        st.elapsed_sum += elapsed
        report.records.append({
            "id": entry.id,
            "tier": entry.noise_tier,
            "best_iou": round(best, 4),
            "hit": best >= IOU_HIT,
            "detections": len(dets),
            "elapsed_ms": round(1000.0 * elapsed, 3),
        })
    return report
