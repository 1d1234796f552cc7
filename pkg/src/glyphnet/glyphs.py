"""Glyph images and providers.

Characters are rendered to 36x36 grayscale grids with intensities in
[0, 1]. The convention is ink = 1, background = 0: blank padding images
are all-zero and produce all-zero CNN activations, and masking a region
"to white" means writing zeros there.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractViolation

GRID = 36
HALF = GRID // 2

# Halves of the grid, by the region that is KEPT.
_KEEP_SLICES = {
    "upper": (slice(0, HALF), slice(None)),
    "lower": (slice(HALF, GRID), slice(None)),
    "left": (slice(None), slice(0, HALF)),
    "right": (slice(None), slice(HALF, GRID)),
}
MASK_KEEPS = tuple(_KEEP_SLICES)


class GlyphImage:
    """Immutable 36x36 grid of ink intensities in [0, 1]."""

    __slots__ = ("pixels",)

    def __init__(self, pixels) -> None:
        arr = np.array(pixels, dtype=np.float64)
        if arr.shape != (GRID, GRID):
            raise ContractViolation(f"glyph image must be {GRID}x{GRID}, got {arr.shape}")
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise ContractViolation("glyph intensities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    def __setattr__(self, name, value):
        raise AttributeError("GlyphImage is immutable")

    @property
    def ink_fraction(self) -> float:
        return float(np.count_nonzero(self.pixels)) / (GRID * GRID)

    def same_pixels(self, other: "GlyphImage") -> bool:
        return bool(np.array_equal(self.pixels, other.pixels))


def blank_glyph() -> GlyphImage:
    return GlyphImage(np.zeros((GRID, GRID)))


def full_glyph() -> GlyphImage:
    return GlyphImage(np.ones((GRID, GRID)))


def mask_half(img: GlyphImage, keep: str) -> GlyphImage:
    """Zero out everything except the kept half of the grid.

    keep is one of "upper", "lower", "left", "right"; the split is at
    row/column 18, so upper+lower (and left+right) partition the grid.
    """
    if keep not in _KEEP_SLICES:
        raise ContractViolation(f"keep must be one of {MASK_KEEPS}, got {keep!r}")
    out = np.zeros((GRID, GRID))
    sl = _KEEP_SLICES[keep]
    out[sl] = img.pixels[sl]
    return GlyphImage(out)


# ----------------------------------------------------------------------
# PGM io. Golden glyphs are stored as plain-text P2 graymaps with
# maxval 255 and intensity = round(255 * pixel); P5 is accepted on read.
# ----------------------------------------------------------------------

def write_pgm(img: GlyphImage, path) -> None:
    write_pgm_array(img.pixels, path)


def write_pgm_array(pixels: np.ndarray, path) -> None:
    """Write any [0,1] gray array as an ASCII P2 graymap."""
    levels = np.rint(np.asarray(pixels, dtype=np.float64) * 255).astype(int)
    h, w = levels.shape
    lines = [f"P2", f"{w} {h}", "255"]
    lines += [" ".join(str(v) for v in row) for row in levels]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    """Read a P2 or P5 graymap into a [0,1] float array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P2", b"P5"):
        raise ContractViolation(f"{path}: not a P2/P5 graymap")
    binary = data[:2] == b"P5"

    tokens = []
    pos = 2
    while len(tokens) < 3:
        # header tokens with '#' comments allowed between them
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    w, h, maxval = (int(t) for t in tokens)
    pos += 1  # single whitespace after maxval

    if binary:
        raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    else:
        raster = np.array(data[pos:].split(), dtype=np.int64)
        if raster.size != w * h:
            raise ContractViolation(f"{path}: expected {w * h} samples, got {raster.size}")
    return raster.reshape(h, w).astype(np.float64) / maxval


# ----------------------------------------------------------------------
# Providers
# ----------------------------------------------------------------------

class _CachingProvider:
    """Codepoint -> GlyphImage cache; fills are lock-protected so a
    provider can be shared by concurrent readers after construction."""

    def __init__(self) -> None:
        self._cache: dict[int, GlyphImage] = {}
        self._lock = threading.Lock()

    def render(self, codepoint: int) -> GlyphImage:
        if not (0 <= codepoint <= 0x10FFFF):
            raise ContractViolation(f"invalid unicode scalar {codepoint!r}")
        img = self._cache.get(codepoint)
        if img is None:
            with self._lock:
                img = self._cache.get(codepoint)
                if img is None:
                    img = self._render(codepoint)
                    self._cache[codepoint] = img
        return img

    def _render(self, codepoint: int) -> GlyphImage:
        raise NotImplementedError


class FontProvider(_CachingProvider):
    """Rasterize glyphs from a TrueType/OpenType font file.

    The glyph's ink bounding box is scaled to fit the 36x36 grid
    preserving aspect ratio, centered, anti-aliased, and normalized so
    the darkest pixel has intensity 1. Codepoints the font cannot draw
    come back as the font's own .notdef box, which doubles as the
    provider fallback. Whitespace renders blank.
    """

    def __init__(self, font_path: str, pixel_size: int = 128) -> None:
        super().__init__()
        if pixel_size < GRID:
            raise ConfigError(f"pixel_size must be >= {GRID}, got {pixel_size}")
        try:
            from PIL import ImageFont
        except ImportError as exc:  # pragma: no cover
            raise ConfigError("font rendering requires the pillow package") from exc
        try:
            self._font = ImageFont.truetype(str(font_path), pixel_size)
        except OSError as exc:
            raise ConfigError(f"cannot load font {font_path}: {exc}") from exc
        self.font_path = str(font_path)
        self.pixel_size = int(pixel_size)
        # U+FDD0 is a noncharacter: no font maps it, so its rendering is
        # the .notdef glyph this font uses for everything unrenderable.
        self._notdef = self._rasterize(0xFDD0)
        self.fallback = self._notdef if self._notdef is not None else blank_glyph()

    def _render(self, codepoint: int) -> GlyphImage:
        img = self._rasterize(codepoint)
        if img is None:
            return blank_glyph() if chr(codepoint).isspace() else self.fallback
        return img

    def _rasterize(self, codepoint: int) -> GlyphImage | None:
        """Draw one character; None when the font leaves no ink."""
        from PIL import Image, ImageDraw

        pad = self.pixel_size // 2
        canvas = Image.new("L", (2 * self.pixel_size + 2 * pad,) * 2, 0)
        draw = ImageDraw.Draw(canvas)
        try:
            draw.text((pad, pad), chr(codepoint), fill=255, font=self._font)
        except (ValueError, OSError):
            return None
        box = canvas.getbbox()
        if box is None:
            return None
        inked = canvas.crop(box)
        scale = GRID / max(inked.width, inked.height)
        w = max(1, round(inked.width * scale))
        h = max(1, round(inked.height * scale))
        small = inked.resize((w, h), Image.Resampling.LANCZOS)
        out = Image.new("L", (GRID, GRID), 0)
        out.paste(small, ((GRID - w) // 2, (GRID - h) // 2))
        arr = np.asarray(out, dtype=np.float64)
        peak = arr.max()
        if peak > 0:
            arr = arr / peak
        return GlyphImage(arr)


def render_glyph(provider, codepoint: int) -> GlyphImage:
    """Deterministically render one codepoint through a provider."""
    return provider.render(codepoint)


def render_title(provider, codepoints) -> list[GlyphImage]:
    """Render a codepoint sequence elementwise; length is preserved."""
    return [provider.render(cp) for cp in codepoints]
