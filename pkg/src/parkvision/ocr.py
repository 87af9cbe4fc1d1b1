"""Character segmentation and template-matching plate reading.

A normalized plate is binarized, cut at column-projection gaps, and each
character cell is scored against the embedded glyph atlas by normalized
cross-correlation over {-1, +1} pixel maps. Reads that fail the plate
grammar get a second chance via lookalike substitution.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .glyphs import (
    ALPHABET,
    ATLAS_VARIANTS,
    CONFUSION_GROUP,
    TEMPLATE_H,
    TEMPLATE_W,
    glyph_template,
    scale_nearest,
)
from .imaging import DegenerateHistogram, otsu_threshold
from .anpr import NORMALIZED_H, NORMALIZED_W, NormalizedPlate
from .plates import position_kinds, valid_plate_text

LOW_CONFIDENCE = 0.55

_DIGITS = set("0123456789")
_LETTERS = set(ALPHABET[:26])


class OcrError(Exception):
    pass


class NoCharacters(OcrError):
    """Segmentation retained zero character boxes."""


@dataclass(frozen=True)
class CharBox:
    bbox: tuple[int, int, int, int]  # x, y, w, h within the plate
    glyph: np.ndarray  # (32, 16) bool


@dataclass(frozen=True)
class PlateReading:
    text: str
    char_confidences: tuple[float, ...]
    elapsed_seconds: float
    low_confidence: bool = False
    grammar_corrected: bool = False

    @property
    def flags(self) -> frozenset[str]:
        out = set()
        if self.low_confidence:
            out.add("low_confidence")
        if self.grammar_corrected:
            out.add("grammar_corrected")
        return frozenset(out)


class GlyphAtlas:
    """All 36 characters, one 16x32 binary template per font variant.

    Scores are the dot product of {-1,+1} maps divided by the pixel count,
    so an exact match is 1.0, an inverted glyph is -1.0, and flipping k of
    the 512 pixels costs exactly 2k/512.
    """

    def __init__(self, entries: dict[str, list[np.ndarray]]):
        if sorted(entries) != sorted(ALPHABET):
            raise ValueError("atlas must cover exactly A-Z and 0-9")
        for char, templates in entries.items():
            for t in templates:
                if t.shape != (TEMPLATE_H, TEMPLATE_W):
                    raise ValueError(f"template for {char!r} is {t.shape}, want (32, 16)")
        self.entries = entries
        rows = []
        owners = []
        for idx, char in enumerate(ALPHABET):
            for t in entries[char]:
                rows.append(np.where(t.ravel(), 1.0, -1.0))
                owners.append(idx)
        self._matrix = np.array(rows)  # (n_templates, 512)
        self._owners = np.array(owners)

    def score_table(self, glyph: np.ndarray) -> np.ndarray:
        """Best NCC against each character, indexed like ALPHABET."""
        if glyph.shape != (TEMPLATE_H, TEMPLATE_W):
            raise ValueError(f"glyph is {glyph.shape}, want (32, 16)")
        v = np.where(glyph.ravel(), 1.0, -1.0)
        per_template = self._matrix @ v / v.size
        table = np.full(len(ALPHABET), -1.0)
        np.maximum.at(table, self._owners, per_template)
        return table


def build_atlas() -> GlyphAtlas:
    """Atlas over the embedded glyph set, all template variants."""
    return GlyphAtlas({
        char: [np.asarray(glyph_template(char, v)) for v in ATLAS_VARIANTS]
        for char in ALPHABET
    })


def segment_characters(plate: NormalizedPlate) -> list[CharBox]:
    """Cut the plate into character cells, left to right.

    Foreground is the minority class of the Otsu split (handles both
    dark-on-light and inverse plates), cells split at runs of >= 2 empty
    columns, and speckle is dropped by the 40%-height / 3-px-width rules.
    """
    img = plate.image
    if img.width != NORMALIZED_W or img.height != NORMALIZED_H:
        raise ValueError(f"plate is {img.width}x{img.height}, want {NORMALIZED_W}x{NORMALIZED_H}")
    try:
        _, bin_img = otsu_threshold(img)
    except DegenerateHistogram:
        raise NoCharacters("plate is uniform") from None
    mask = bin_img.pixels.astype(bool)
    if mask.sum() * 2 > mask.size:
        mask = ~mask

    col_any = mask.any(axis=0)
    xs = np.nonzero(col_any)[0]
    if xs.size == 0:
        raise NoCharacters("no foreground columns")
    groups = []
    start = prev = int(xs[0])
    for x in xs[1:]:
        x = int(x)
        if x - prev <= 2:  # an isolated single empty column does not split
            prev = x
        else:
            groups.append((start, prev))
            start = prev = x
    groups.append((start, prev))

    min_h = 0.4 * NORMALIZED_H
    boxes = []
    for x0, x1 in groups:
        sub = mask[:, x0:x1 + 1]
        row_idx = np.nonzero(sub.any(axis=1))[0]
        y0, y1 = int(row_idx[0]), int(row_idx[-1])
        w = x1 - x0 + 1
        h = y1 - y0 + 1
        if h < min_h or w < 3:
            continue
        glyph = scale_nearest(sub[y0:y1 + 1], TEMPLATE_W, TEMPLATE_H)
        boxes.append(CharBox(bbox=(x0, y0, w, h), glyph=glyph))
    if not boxes:
        raise NoCharacters("no boxes survived the size filters")
    return boxes


def match_char(glyph: np.ndarray, atlas: GlyphAtlas) -> tuple[str, float]:
    """Best-scoring character; ties go to the first in A-Z then 0-9 order."""
    table = atlas.score_table(glyph)
    idx = int(np.argmax(table))
    return ALPHABET[idx], float(table[idx])


def _correct_to_grammar(raw: str, tables: list[np.ndarray]) -> str:
    """Swap kind-invalid characters for their best-scoring lookalike of the
    right kind; characters without a valid lookalike stay as read."""
    kinds = position_kinds(len(raw))
    if kinds is None:
        return raw
    out = []
    for ch, kind, table in zip(raw, kinds, tables):
        want = _LETTERS if kind == "L" else _DIGITS
        candidates = {ch} | CONFUSION_GROUP.get(ch, frozenset())
        candidates = [c for c in candidates if c in want]
        if not candidates:
            out.append(ch)
            continue
        out.append(max(candidates, key=lambda c: table[ALPHABET.index(c)]))
    return "".join(out)


def recognize_plate(plate: NormalizedPlate, atlas: GlyphAtlas) -> PlateReading:
    """Segment, match every cell, and grammar-correct the raw read."""
    t0 = time.perf_counter()
    boxes = segment_characters(plate)
    tables = [atlas.score_table(b.glyph) for b in boxes]
    raw = "".join(ALPHABET[int(np.argmax(t))] for t in tables)

    text = raw
    corrected = False
    if not valid_plate_text(raw):
        text = _correct_to_grammar(raw, tables)
        corrected = text != raw
    confidences = tuple(float(t[ALPHABET.index(c)]) for c, t in zip(text, tables))
    elapsed = time.perf_counter() - t0
    return PlateReading(
        text=text,
        char_confidences=confidences,
        elapsed_seconds=elapsed,
        low_confidence=any(c < LOW_CONFIDENCE for c in confidences),
        grammar_corrected=corrected,
    )


REJECTION_ROW = "REJ"


def confusion_matrix(entries, images_dir: str | Path, read_text) -> np.ndarray:
    """Aligned truth-vs-predicted counts over a corpus.

    Rows 0..35 are truth characters, columns are predictions. Reads whose
    length does not match the truth are tallied in the final rejection row
    under the truth character's column.
    """
    from .imaging import read_image  # local import to keep module load light

    counts = np.zeros((len(ALPHABET) + 1, len(ALPHABET)), dtype=np.int64)
    images_dir = Path(images_dir)
    for entry in entries:
        predicted = read_text(read_image(images_dir / entry.image_path))
        truth = entry.truth_text
        if predicted is not None and len(predicted) == len(truth):
            for t_ch, p_ch in zip(truth, predicted):
                if p_ch in ALPHABET:
                    counts[ALPHABET.index(t_ch), ALPHABET.index(p_ch)] += 1
        else:
            for t_ch in truth:
                counts[len(ALPHABET), ALPHABET.index(t_ch)] += 1
    return counts


def write_confusion_csv(counts: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["truth"] + list(ALPHABET))
        for i, char in enumerate(ALPHABET):
            writer.writerow([char] + counts[i].tolist())
        writer.writerow([REJECTION_ROW] + counts[len(ALPHABET)].tolist())


def off_diagonal_confusion_split(counts: np.ndarray) -> tuple[int, int]:
    """(off-diagonal mass inside declared lookalike groups, total off-diagonal
    mass), rejection row excluded."""
    inside = 0
    total = 0
    for i, t_ch in enumerate(ALPHABET):
        for j, p_ch in enumerate(ALPHABET):
            if i == j:
                continue
            c = int(counts[i, j])
            if not c:
                continue
            total += c
            if p_ch in CONFUSION_GROUP.get(t_ch, frozenset()):
                inside += c
    return inside, total
