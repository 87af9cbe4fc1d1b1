"""Embedded bitmap glyphs for A-Z and 0-9.

The master shapes are 5x7 dot-matrix strokes, scaled to 16x32 templates by
nearest-neighbor. Two font variants exist: 0 is the plain scale-up, 1 is a
bold cut (horizontal 1-px dilation). The plate renderer and the character
matcher both draw from this data, so the glyph set is its own ground truth.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"

TEMPLATE_W = 16
TEMPLATE_H = 32

# Latin/digit lookalike groups used for read correction and fuzzy plate
# matching; substitutions inside one group are cheap everywhere.
CONFUSION_CLASSES = (
    frozenset("O0DQ"),
    frozenset("I1L"),
    frozenset("B8"),
    frozenset("Z2"),
    frozenset("S5"),
    frozenset("G6"),
    frozenset("A4"),
)

CONFUSION_GROUP = {c: group for group in CONFUSION_CLASSES for c in group}


def confusable(a: str, b: str) -> bool:
    """True when two characters belong to the same lookalike group."""
    return a != b and CONFUSION_GROUP.get(a) is not None and b in CONFUSION_GROUP[a]

# 7 rows x 5 cols, '#' = ink. Lookalike pairs (O/0, I/1, B/8, S/5, Z/2,
# G/6, A/4, D/Q) are deliberately distinct at this resolution.
_STROKES = {
    "A": (".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "B": ("####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."),
    "C": (".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."),
    "D": ("###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."),
    "E": ("#####", "#....", "#....", "####.", "#....", "#....", "#####"),
    "F": ("#####", "#....", "#....", "####.", "#....", "#....", "#...."),
    "G": (".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"),
    "H": ("#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "I": (".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "J": ("..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."),
    "K": ("#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"),
    "L": ("#....", "#....", "#....", "#....", "#....", "#....", "#####"),
    "M": ("#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"),
    "N": ("#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"),
    "O": (".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "P": ("####.", "#...#", "#...#", "####.", "#....", "#....", "#...."),
    "Q": (".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"),
    "R": ("####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"),
    "S": (".####", "#....", "#....", ".###.", "....#", "....#", "####."),
    "T": ("#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."),
    "U": ("#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "V": ("#...#", "#...#", "#...#", ".#.#.", ".#.#.", "..#..", "..#.."),
    "W": ("#...#", "#...#", "#...#", "#.#.#", "#.#.#", "##.##", "#...#"),
    "X": ("#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"),
    "Y": ("#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."),
    "Z": ("#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"),
    "0": (".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."),
    "1": ("..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "2": (".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"),
    "3": ("#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."),
    "4": ("...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."),
    "5": ("#####", "#....", "####.", "....#", "....#", "#...#", "####."),
    "6": ("..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."),
    "7": ("#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."),
    "8": (".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."),
    "9": (".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."),
}

# variants 0 (plain) and 1 (bold) are renderable fonts; variant 2 (wide) is
# matching-only, compensating the stroke inflation that bilinear resampling
# plus re-binarization adds to observed glyphs
FONT_VARIANTS = (0, 1)
ATLAS_VARIANTS = (0, 1, 2)


def _stroke_array(char: str) -> np.ndarray:
    rows = _STROKES[char]
    return np.array([[c == "#" for c in row] for row in rows], dtype=bool)


def scale_nearest(bitmap: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Nearest-neighbor rescale of a boolean bitmap, center-aligned."""
    src_h, src_w = bitmap.shape
    ys = np.minimum(((np.arange(out_h) + 0.5) * src_h / out_h).astype(np.int64), src_h - 1)
    xs = np.minimum(((np.arange(out_w) + 0.5) * src_w / out_w).astype(np.int64), src_w - 1)
    return bitmap[np.ix_(ys, xs)]


def _bold(bitmap: np.ndarray) -> np.ndarray:
    out = bitmap.copy()
    out[:, 1:] |= bitmap[:, :-1]
    return out


def _wide(bitmap: np.ndarray) -> np.ndarray:
    out = bitmap.copy()
    out[:, 1:] |= bitmap[:, :-1]
    out[:, :-1] |= bitmap[:, 1:]
    return out


def _tight(bitmap: np.ndarray) -> np.ndarray:
    rows = np.nonzero(bitmap.any(axis=1))[0]
    cols = np.nonzero(bitmap.any(axis=0))[0]
    return bitmap[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]


@lru_cache(maxsize=None)
def glyph_template(char: str, variant: int = 0) -> np.ndarray:
    """16x32 boolean template for one character and font variant.

    Templates are the ink's tight box scaled to 16x32 — the same space a
    segmenter lands in when it resamples a character's tight box, so
    observed glyphs and templates compare like for like.
    """
    if char not in _STROKES:
        raise KeyError(f"no glyph for {char!r}")
    if variant not in ATLAS_VARIANTS:
        raise KeyError(f"unknown font variant {variant}")
    base = scale_nearest(_tight(_stroke_array(char)), TEMPLATE_W, TEMPLATE_H)
    out = base
    if variant == 1:
        out = _tight(_bold(base))
    elif variant == 2:
        out = _tight(_wide(base))
    if out.shape != (TEMPLATE_H, TEMPLATE_W):
        out = scale_nearest(out, TEMPLATE_W, TEMPLATE_H)
    out.setflags(write=False)
    return out


def glyph_bitmap(char: str, width: int, height: int, variant: int = 0) -> np.ndarray:
    """Glyph rescaled from its 16x32 template to an arbitrary cell size."""
    return scale_nearest(glyph_template(char, variant), width, height)
