"""Deterministic plate renderer and scene generator with ground truth.

A corpus is a directory of PGM scenes plus a JSON-lines manifest. Every byte
is a function of the corpus seed: per-scene parameters come from a splitmix64
stream seeded with subseed(seed, index), so scenes can be produced serially
or in parallel with identical output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .glyphs import FONT_VARIANTS, glyph_bitmap
from .imaging import GrayImage, write_image
from .plates import valid_plate_text
from .rng import SplitMix64, bulk_gauss, bulk_uniform, mix64, subseed

_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
_DIGITS = "0123456789"

NOISE_PROFILES = {
    "clean": {"sigma": 0.0, "max_rotation": 3.0},
    "noisy": {"sigma": 8.0, "max_rotation": 12.0},
}

_PIXEL_STREAM_SALT = 0x5CE9E5


class SynthError(Exception):
    pass


class InvalidPlateText(SynthError):
    pass


class PlateOutOfBounds(SynthError):
    pass


@dataclass(frozen=True)
class PlateSpec:
    text: str
    plate_w: int = 256
    plate_h: int = 48
    fg: int = 40
    bg: int = 215
    font_id: int = 0

    def __post_init__(self):
        if not valid_plate_text(self.text):
            raise InvalidPlateText(f"{self.text!r} does not match the plate grammar")
        if self.fg == self.bg:
            raise InvalidPlateText("fg and bg gray levels must differ")
        if self.font_id not in FONT_VARIANTS:
            raise InvalidPlateText(f"font_id must be one of {FONT_VARIANTS}")


@dataclass(frozen=True)
class SceneSpec:
    canvas_w: int
    canvas_h: int
    plate_position: tuple[int, int]
    scale: float = 1.0
    rotation: float = 0.0  # degrees, counterclockwise on screen
    noise_sigma: float = 0.0
    distractor_count: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not -15.0 <= self.rotation <= 15.0:
            raise ValueError("rotation must be within [-15, 15] degrees")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class CorpusManifestEntry:
    id: str
    image_path: str
    truth_text: str
    truth_bbox: tuple[int, int, int, int]
    noise_tier: str


_MARGIN = 4
_MIN_GAP = 5

# corpus scale range: plates need enough strong-edge mass for Otsu on the
# gradient to split above the sigma=8 noise floor of the noisy tier
_SCALE_LO = 0.95
_SCALE_HI = 1.3


def render_plate(spec: PlateSpec) -> GrayImage:
    """Draw the plate text on a uniform background; an identical PlateSpec
    always produces identical bytes.

    Characters keep the 1:2 glyph aspect, are centered, and sit at least
    `_MARGIN` pixels from every plate edge with uniform gaps between cells.
    A mid-tone trim (inset frame plus pinstripes over background pixels)
    gives the plate dense edge structure for the gradient-based localizer;
    the trim sits halfway between fg and bg so any two-class binarization
    lumps it with the background and character shapes stay untouched.
    """
    n = len(spec.text)
    inner_w = spec.plate_w - 2 * _MARGIN
    inner_h = spec.plate_h - 2 * _MARGIN
    char_w = min(inner_h // 2, (inner_w - (n - 1) * _MIN_GAP) // n)
    if char_w < 3:
        raise InvalidPlateText(f"plate {spec.plate_w}x{spec.plate_h} too small for {n} characters")
    char_h = 2 * char_w
    gap = (inner_w - n * char_w) // (n - 1)
    x0 = _MARGIN + (inner_w - n * char_w - (n - 1) * gap) // 2
    y0 = _MARGIN + (inner_h - char_h) // 2

    canvas = np.full((spec.plate_h, spec.plate_w), spec.bg, dtype=np.uint8)
    # trim sits 52 levels off the background, toward the ink: strong enough
    # an edge for the gradient localizer, same Otsu class as the background
    offset = -52 if spec.bg > spec.fg else 52
    trim = np.uint8(min(255, max(0, int(spec.bg) + offset)))
    canvas[2:5, 2:-2] = trim
    canvas[-5:-2, 2:-2] = trim
    canvas[2:-2, 2:5] = trim
    canvas[2:-2, -5:-2] = trim

    x = x0
    for ch in spec.text:
        bitmap = glyph_bitmap(ch, char_w, char_h, spec.font_id)
        cell = canvas[y0:y0 + char_h, x:x + char_w]
        cell[bitmap] = spec.fg
        x += char_w + gap

    for yy in range(6, spec.plate_h - 5, 6):
        row = canvas[yy, 6:-6]
        row[row == spec.bg] = trim
    for xx in range(8, spec.plate_w - 6, 8):
        col = canvas[6:-6, xx]
        col[col == spec.bg] = trim
    return GrayImage(canvas)


def _transform_patch(plate: np.ndarray, scale: float, rotation_deg: float):
    """Scaled/rotated plate as (patch float array, inside mask, width, height).

    Output size is the tight axis-aligned box of the transformed rectangle.
    Bilinear sampling by inverse mapping; rotation 0 / scale 1 is an exact
    pixel copy.
    """
    h, w = plate.shape
    phi = math.radians(-rotation_deg)  # y-down convention
    c, s = math.cos(phi), math.sin(phi)
    out_w = math.ceil(scale * (w * abs(c) + h * abs(s)))
    out_h = math.ceil(scale * (w * abs(s) + h * abs(c)))

    jj, ii = np.meshgrid(np.arange(out_w), np.arange(out_h))
    dx = jj + 0.5 - out_w / 2.0
    dy = ii + 0.5 - out_h / 2.0
    # inverse of (scale * R(phi))
    sx = (c * dx + s * dy) / scale + w / 2.0
    sy = (-s * dx + c * dy) / scale + h / 2.0
    px = sx - 0.5
    py = sy - 0.5
    inside = (px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1)

    px_c = np.clip(px, 0, w - 1)
    py_c = np.clip(py, 0, h - 1)
    x0 = np.floor(px_c).astype(np.int64)
    y0 = np.floor(py_c).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = px_c - x0
    fy = py_c - y0
    p = plate.astype(np.float64)
    patch = (p[y0, x0] * (1 - fx) * (1 - fy)
             + p[y0, x1] * fx * (1 - fy)
             + p[y1, x0] * (1 - fx) * fy
             + p[y1, x1] * fx * fy)
    return patch, inside, out_w, out_h


def transformed_plate_size(plate_w: int, plate_h: int, scale: float, rotation_deg: float) -> tuple[int, int]:
    """AABB dimensions of the plate after scale and rotation."""
    phi = math.radians(rotation_deg)
    c, s = abs(math.cos(phi)), abs(math.sin(phi))
    return (math.ceil(scale * (plate_w * c + plate_h * s)),
            math.ceil(scale * (plate_w * s + plate_h * c)))


def _rects_overlap(a, b) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def compose_scene(plate: GrayImage, scene: SceneSpec) -> tuple[GrayImage, tuple[int, int, int, int]]:
    """Place the transformed plate over a textured background.

    Returns the scene and the tight axis-aligned truth box of the plate.
    Distractor rectangles never come within 12 px of the plate box and never
    have a plate-like aspect ratio.
    """
    W, H = scene.canvas_w, scene.canvas_h
    params = SplitMix64(scene.rng_seed)
    pixel_seed = mix64(scene.rng_seed ^ _PIXEL_STREAM_SALT)
    npix = W * H

    # low-frequency gradient background, kept near plate-background brightness
    # so crop margins binarize into the background class downstream
    base = params.randint(160, 200)
    slope_x = params.uniform_range(-20.0, 20.0) / max(W - 1, 1)
    slope_y = params.uniform_range(-20.0, 20.0) / max(H - 1, 1)
    xs = np.arange(W, dtype=np.float64)
    ys = np.arange(H, dtype=np.float64)
    field = base + slope_x * xs[np.newaxis, :] + slope_y * ys[:, np.newaxis]

    # seeded speckle, uniform in [-6, 6]
    speckle = np.floor(bulk_uniform(pixel_seed, 0, npix) * 13.0).reshape(H, W) - 6.0
    field = field + speckle

    patch, inside, out_w, out_h = _transform_patch(plate.pixels, scene.scale, scene.rotation)
    x, y = scene.plate_position
    if x < 0 or y < 0 or x + out_w > W or y + out_h > H:
        raise PlateOutOfBounds(
            f"transformed plate {out_w}x{out_h} at ({x},{y}) exceeds {W}x{H} canvas")
    truth_bbox = (x, y, out_w, out_h)

    # distractors: aspect outside [2, 6], kept clear of the plate box
    keepout = (x - 12, y - 12, out_w + 24, out_h + 24)
    distractors = []
    for _ in range(scene.distractor_count):
        dh = params.randint(30, 110)
        dw = max(8, int(dh * params.uniform_range(0.5, 1.5)))
        gray = params.randint(20, 235)
        placed = None
        for _attempt in range(20):
            dx_pos = params.randint(0, max(W - dw, 0))
            dy_pos = params.randint(0, max(H - dh, 0))
            cand = (dx_pos, dy_pos, dw, dh)
            if not _rects_overlap(cand, keepout):
                placed = cand
                break
        if placed is not None:
            distractors.append((placed, gray))

    for (dx_pos, dy_pos, dw, dh), gray in distractors:
        field[dy_pos:dy_pos + dh, dx_pos:dx_pos + dw] = gray

    region = field[y:y + out_h, x:x + out_w]
    region[inside] = patch[inside]

    if scene.noise_sigma > 0:
        noise = bulk_gauss(pixel_seed, npix, npix, scene.noise_sigma).reshape(H, W)
        field = field + noise

    return GrayImage(np.clip(np.floor(field + 0.5), 0, 255).astype(np.uint8)), truth_bbox


def random_plate_text(rng: SplitMix64) -> str:
    mid = rng.randint(1, 2)
    parts = [rng.choice(_LETTERS) for _ in range(2)]
    parts += [rng.choice(_DIGITS) for _ in range(2)]
    parts += [rng.choice(_LETTERS) for _ in range(mid)]
    parts += [rng.choice(_DIGITS) for _ in range(4)]
    return "".join(parts)


def generate_corpus(seed: int, count: int, noise_profile: str, out_dir: str | Path,
                    canvas_w: int = 640, canvas_h: int = 480) -> Path:
    """Generate `count` scenes plus a manifest; bit-reproducible from `seed`.

    Returns the manifest path. Raises on unwritable output or bad arguments.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if noise_profile not in NOISE_PROFILES:
        raise ValueError(f"unknown noise profile {noise_profile!r}")
    profile = NOISE_PROFILES[noise_profile]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as mf:
        for i in range(count):
            entry, image = _generate_scene(seed, i, noise_profile, profile, canvas_w, canvas_h)
            write_image(image, out / entry.image_path)
            mf.write(json.dumps({
                "id": entry.id,
                "image": entry.image_path,
                "text": entry.truth_text,
                "bbox": list(entry.truth_bbox),
                "tier": entry.noise_tier,
            }) + "\n")
    return manifest_path


def _generate_scene(seed: int, index: int, tier: str, profile: dict,
                    canvas_w: int, canvas_h: int) -> tuple[CorpusManifestEntry, GrayImage]:
    rng = SplitMix64(subseed(seed, index))
    text = random_plate_text(rng)
    font_id = rng.randint(0, 1)
    bg = rng.randint(190, 230)
    fg = rng.randint(25, 60)
    plate = render_plate(PlateSpec(text=text, fg=fg, bg=bg, font_id=font_id))

    scale = rng.uniform_range(_SCALE_LO, _SCALE_HI)
    rotation = rng.uniform_range(-profile["max_rotation"], profile["max_rotation"])
    out_w, out_h = transformed_plate_size(plate.width, plate.height, scale, rotation)
    x = rng.randint(8, canvas_w - 8 - out_w)
    y = rng.randint(8, canvas_h - 8 - out_h)
    distractors = rng.randint(1, 3)
    scene_seed = rng.next_u64()

    scene = SceneSpec(canvas_w, canvas_h, (x, y), scale, rotation,
                      profile["sigma"], distractors, scene_seed)
    image, bbox = compose_scene(plate, scene)
    entry = CorpusManifestEntry(
        id=f"scene-{index:05d}",
        image_path=f"scene-{index:05d}.pgm",
        truth_text=text,
        truth_bbox=bbox,
        noise_tier=tier,
    )
    return entry, image


def read_manifest(path: str | Path) -> list[CorpusManifestEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            entry = CorpusManifestEntry(
                id=rec["id"],
                image_path=rec["image"],
                truth_text=rec["text"],
                truth_bbox=tuple(rec["bbox"]),
                noise_tier=rec["tier"],
            )
            if not valid_plate_text(entry.truth_text):
                raise SynthError(f"{entry.id}: manifest text fails the plate grammar")
            entries.append(entry)
    return entries
