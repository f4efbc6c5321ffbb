"""Built-in 5x7 bitmap font.

Glyphs are defined as 7 rows of 5 cells. Rendering happens directly into a
float numpy canvas, which keeps corpus generation byte-deterministic with no
dependency on system font files.
"""

from __future__ import annotations

import numpy as np

GLYPH_W = 5
GLYPH_H = 7

_RAW = {
    "A": ".XXX.|X...X|X...X|XXXXX|X...X|X...X|X...X",
    "B": "XXXX.|X...X|X...X|XXXX.|X...X|X...X|XXXX.",
    "C": ".XXX.|X...X|X....|X....|X....|X...X|.XXX.",
    "D": "XXXX.|X...X|X...X|X...X|X...X|X...X|XXXX.",
    "E": "XXXXX|X....|X....|XXXX.|X....|X....|XXXXX",
    "F": "XXXXX|X....|X....|XXXX.|X....|X....|X....",
    "G": ".XXX.|X...X|X....|X.XXX|X...X|X...X|.XXXX",
    "H": "X...X|X...X|X...X|XXXXX|X...X|X...X|X...X",
    "I": ".XXX.|..X..|..X..|..X..|..X..|..X..|.XXX.",
    "J": "..XXX|...X.|...X.|...X.|...X.|X..X.|.XX..",
    "K": "X...X|X..X.|X.X..|XX...|X.X..|X..X.|X...X",
    "L": "X....|X....|X....|X....|X....|X....|XXXXX",
    "M": "X...X|XX.XX|X.X.X|X.X.X|X...X|X...X|X...X",
    "N": "X...X|XX..X|X.X.X|X..XX|X...X|X...X|X...X",
    "O": ".XXX.|X...X|X...X|X...X|X...X|X...X|.XXX.",
    "P": "XXXX.|X...X|X...X|XXXX.|X....|X....|X....",
    "Q": ".XXX.|X...X|X...X|X...X|X.X.X|X..X.|.XX.X",
    "R": "XXXX.|X...X|X...X|XXXX.|X.X..|X..X.|X...X",
    "S": ".XXXX|X....|X....|.XXX.|....X|....X|XXXX.",
    "T": "XXXXX|..X..|..X..|..X..|..X..|..X..|..X..",
    "U": "X...X|X...X|X...X|X...X|X...X|X...X|.XXX.",
    "V": "X...X|X...X|X...X|X...X|X...X|.X.X.|..X..",
    "W": "X...X|X...X|X...X|X.X.X|X.X.X|XX.XX|X...X",
    "X": "X...X|X...X|.X.X.|..X..|.X.X.|X...X|X...X",
    "Y": "X...X|X...X|.X.X.|..X..|..X..|..X..|..X..",
    "Z": "XXXXX|....X|...X.|..X..|.X...|X....|XXXXX",
    "0": ".XXX.|X...X|X..XX|X.X.X|XX..X|X...X|.XXX.",
    "1": "..X..|.XX..|..X..|..X..|..X..|..X..|.XXX.",
    "2": ".XXX.|X...X|....X|...X.|..X..|.X...|XXXXX",
    "3": "XXXXX|....X|...X.|..XX.|....X|X...X|.XXX.",
    "4": "...X.|..XX.|.X.X.|X..X.|XXXXX|...X.|...X.",
    "5": "XXXXX|X....|XXXX.|....X|....X|X...X|.XXX.",
    "6": "..XX.|.X...|X....|XXXX.|X...X|X...X|.XXX.",
    "7": "XXXXX|....X|...X.|..X..|.X...|.X...|.X...",
    "8": ".XXX.|X...X|X...X|.XXX.|X...X|X...X|.XXX.",
    "9": ".XXX.|X...X|X...X|.XXXX|....X|...X.|.XX..",
    " ": ".....|.....|.....|.....|.....|.....|.....",
    ".": ".....|.....|.....|.....|.....|.XX..|.XX..",
    ",": ".....|.....|.....|.....|.XX..|..X..|.X...",
    ":": ".....|.XX..|.XX..|.....|.XX..|.XX..|.....",
    ";": ".....|.XX..|.XX..|.....|.XX..|..X..|.X...",
    "-": ".....|.....|.....|XXXXX|.....|.....|.....",
    "_": ".....|.....|.....|.....|.....|.....|XXXXX",
    "/": "....X|....X|...X.|..X..|.X...|X....|X....",
    "\\": "X....|X....|.X...|..X..|...X.|....X|....X",
    "#": ".X.X.|.X.X.|XXXXX|.X.X.|XXXXX|.X.X.|.X.X.",
    "$": "..X..|.XXXX|X.X..|.XXX.|..X.X|XXXX.|..X..",
    "%": "XX...|XX..X|...X.|..X..|.X...|X..XX|...XX",
    "&": ".XX..|X..X.|X.X..|.X...|X.X.X|X..X.|.XX.X",
    "(": "...X.|..X..|.X...|.X...|.X...|..X..|...X.",
    ")": ".X...|..X..|...X.|...X.|...X.|..X..|.X...",
    "+": ".....|..X..|..X..|XXXXX|..X..|..X..|.....",
    "=": ".....|.....|XXXXX|.....|XXXXX|.....|.....",
    "*": ".....|.X.X.|..X..|XXXXX|..X..|.X.X.|.....",
    "'": "..X..|..X..|.X...|.....|.....|.....|.....",
    '"': ".X.X.|.X.X.|.....|.....|.....|.....|.....",
    "@": ".XXX.|X...X|X.XXX|X.X.X|X.XXX|X....|.XXX.",
    "!": "..X..|..X..|..X..|..X..|..X..|.....|..X..",
    "?": ".XXX.|X...X|....X|...X.|..X..|.....|..X..",
    "<": "...X.|..X..|.X...|X....|.X...|..X..|...X.",
    ">": ".X...|..X..|...X.|....X|...X.|..X..|.X...",
}


def _parse(pattern: str) -> np.ndarray:
    rows = pattern.split("|")
    assert len(rows) == GLYPH_H and all(len(r) == GLYPH_W for r in rows), pattern
    return np.array([[c == "X" for c in row] for row in rows], dtype=bool)


GLYPHS: dict[str, np.ndarray] = {ch: _parse(p) for ch, p in _RAW.items()}

CHARSET = "".join(sorted(GLYPHS))


def glyph(ch: str) -> np.ndarray:
    """Boolean 7x5 bitmap for a character; unknown characters render as '?'."""
    return GLYPHS.get(ch.upper(), GLYPHS["?"])


def text_size(text: str, scale: int = 1, bold: bool = False) -> tuple[int, int]:
    """(width, height) in pixels of `text` rendered at `scale`."""
    if not text:
        return 0, GLYPH_H * scale
    extra = 1 if bold else 0
    w = len(text) * (GLYPH_W + extra) * scale + (len(text) - 1) * scale
    return w, GLYPH_H * scale


def draw_text(
    canvas: np.ndarray,
    x: int,
    y: int,
    text: str,
    scale: int = 1,
    ink: float = 0.0,
    bold: bool = False,
) -> tuple[int, int, int, int]:
    """Draw `text` with its top-left glyph corner at (x, y); returns the tight box.

    Bold widens every stroke by one pre-scale pixel. The caller is responsible
    for checking text_size() against the canvas first; drawing out of bounds
    raises.
    """
    w, h = text_size(text, scale, bold)
    if x < 0 or y < 0 or x + w > canvas.shape[1] or y + h > canvas.shape[0]:
        raise ValueError(f"text {text!r} at ({x}, {y}) exceeds canvas {canvas.shape[1]}x{canvas.shape[0]}")
    extra = 1 if bold else 0
    cx = x
    for ch in text:
        bitmap = glyph(ch)
        if bold:
            widened = np.zeros((GLYPH_H, GLYPH_W + 1), dtype=bool)
            widened[:, :-1] |= bitmap
            widened[:, 1:] |= bitmap
            bitmap = widened
        block = np.kron(bitmap, np.ones((scale, scale), dtype=bool))
        region = canvas[y : y + block.shape[0], cx : cx + block.shape[1]]
        region[block] = ink
        cx += (GLYPH_W + extra + 1) * scale
    return (x, y, x + w, y + h)
