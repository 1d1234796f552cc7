"""Procedural glyph fixtures.

A deterministic glyph family that lets the whole pipeline (rendering,
training, occlusion analysis) run without any font file. Each fixture
character is a composite of two 18x18 sub-bitmaps placed in left/right
or top/bottom slots of the 36x36 grid: one "radical" pattern that
carries the character's meaning, and one distractor pattern that does
not. Characters live in the Unicode private use area so they flow
through vocabularies and corpora like ordinary text.
"""

from __future__ import annotations

import numpy as np

from .corpus import Instance
from .errors import ConfigError, ContractViolation
from .glyphs import GRID, HALF, GlyphImage, _CachingProvider, blank_glyph, full_glyph
from .rng import STREAM_FIXTURE, substream

FIXTURE_SETS = ("radicals-v1",)

RADICAL_COUNT = 12
DISTRACTOR_COUNT = 16

PUA_BASE = 0xE000
FULL_BLOCK = 0x2588

# Quadrant corners, indexed 0..3: top-left, top-right, bottom-left, bottom-right.
QUADRANTS = ((0, 0), (0, HALF), (HALF, 0), (HALF, HALF))

# (radical quadrant, distractor quadrant): four left/right compositions
# followed by four top/bottom ones.
LAYOUTS = ((0, 1), (1, 0), (2, 3), (3, 2), (0, 2), (2, 0), (1, 3), (3, 1))

_BITMAP_SEED = 0x61F  # fixed: the fixture set is the same for everyone


def radical_bitmap(index: int, distractor: bool = False) -> np.ndarray:
    """Deterministic 18x18 binary pattern; blocky so 3x3 convs can key on it."""
    count = DISTRACTOR_COUNT if distractor else RADICAL_COUNT
    if not 0 <= index < count:
        raise ContractViolation(f"bitmap index {index} out of range")
    rng = substream(_BITMAP_SEED, STREAM_FIXTURE, int(distractor), index)
    coarse = rng.integers(0, 2, size=(6, 6)).astype(np.float64)
    bitmap = np.kron(coarse, np.ones((3, 3)))
    assert bitmap.any(), "degenerate all-blank bitmap"
    return bitmap


def composite_codepoint(radical: int, distractor: int, layout: int) -> int:
    if not (0 <= radical < RADICAL_COUNT and 0 <= distractor < DISTRACTOR_COUNT and 0 <= layout < len(LAYOUTS)):
        raise ContractViolation(f"bad composite ({radical}, {distractor}, {layout})")
    return PUA_BASE + (radical * DISTRACTOR_COUNT + distractor) * len(LAYOUTS) + layout


def decode_composite(codepoint: int) -> tuple[int, int, int] | None:
    """Inverse of composite_codepoint; None for codepoints outside the family."""
    off = codepoint - PUA_BASE
    if not 0 <= off < RADICAL_COUNT * DISTRACTOR_COUNT * len(LAYOUTS):
        return None
    layout = off % len(LAYOUTS)
    rd = off // len(LAYOUTS)
    return rd // DISTRACTOR_COUNT, rd % DISTRACTOR_COUNT, layout


def radical_quadrant(codepoint: int) -> int:
    """Which quadrant (0..3) holds the radical of a composite character."""
    parts = decode_composite(codepoint)
    if parts is None:
        raise ContractViolation(f"U+{codepoint:04X} is not a composite fixture character")
    return LAYOUTS[parts[2]][0]


def _tofu() -> GlyphImage:
    # hollow box, the classic "missing glyph" shape
    px = np.zeros((GRID, GRID))
    px[4:32, 4:32] = 1.0
    px[7:29, 7:29] = 0.0
    return GlyphImage(px)


class FixtureProvider(_CachingProvider):
    """Glyph provider backed by the procedural fixture family.

    Space renders blank, U+2588 renders solid ink, private-use
    composites render their radical/distractor layout, and everything
    else falls back to a hollow box.
    """

    def __init__(self, fixture_set: str = "radicals-v1") -> None:
        super().__init__()
        if fixture_set not in FIXTURE_SETS:
            raise ConfigError(f"unknown fixture set {fixture_set!r}; known: {FIXTURE_SETS}")
        self.fixture_set = fixture_set
        self.fallback = _tofu()

    def _render(self, codepoint: int) -> GlyphImage:
        if codepoint == FULL_BLOCK:
            return full_glyph()
        parts = decode_composite(codepoint)
        if parts is not None:
            radical, distractor, layout = parts
            px = np.zeros((GRID, GRID))
            rq, dq = LAYOUTS[layout]
            r0, c0 = QUADRANTS[rq]
            px[r0 : r0 + HALF, c0 : c0 + HALF] = radical_bitmap(radical)
            r0, c0 = QUADRANTS[dq]
            px[r0 : r0 + HALF, c0 : c0 + HALF] = radical_bitmap(distractor, distractor=True)
            return GlyphImage(px)
        if chr(codepoint).isspace():
            return blank_glyph()
        return self.fallback


# ----------------------------------------------------------------------
# Synthetic corpora. Labels are the radical ids, so category k is
# decided entirely by whether radical k appears in the title's glyphs.
# ----------------------------------------------------------------------

def _composite_char(rng, radical: int, distractors) -> str:
    return chr(
        composite_codepoint(
            radical,
            int(rng.choice(distractors)),
            int(rng.integers(0, len(LAYOUTS))),
        )
    )


def make_overfit_corpus(size: int = 64, seed: int = 7) -> list[Instance]:
    """Small memorization corpus: `size` training titles over 12 labels."""
    rng = substream(seed, STREAM_FIXTURE, 1)
    out = []
    for i in range(size):
        label = i % RADICAL_COUNT
        length = int(rng.integers(2, 5))
        title = "".join(_composite_char(rng, label, range(DISTRACTOR_COUNT)) for _ in range(length))
        out.append(Instance(title=title, label=label, split="train"))
    return out


def make_rare_char_corpus(
    seed: int = 11,
    train_per_class: int = 80,
    test_per_class: int = 20,
    title_len: int = 3,
    train_distractors=tuple(range(6)),
    test_distractors=tuple(range(6, 8)),
) -> tuple[list[Instance], list[Instance]]:
    """Generalization corpus whose test characters never occur in training.

    Training titles use composite characters drawn from one distractor
    pool, test titles from a disjoint pool, so every test codepoint is
    unseen while the label-bearing radicals are shared.
    """
    if set(train_distractors) & set(test_distractors):
        raise ConfigError("train and test distractor pools must be disjoint")
    rng = substream(seed, STREAM_FIXTURE, 2)
    train, test = [], []
    for label in range(RADICAL_COUNT):
        for _ in range(train_per_class):
            title = "".join(_composite_char(rng, label, train_distractors) for _ in range(title_len))
            train.append(Instance(title=title, label=label, split="train"))
        for _ in range(test_per_class):
            title = "".join(_composite_char(rng, label, test_distractors) for _ in range(title_len))
            test.append(Instance(title=title, label=label, split="test"))
    train_chars = {c for inst in train for c in inst.title}
    test = [inst for inst in test if not (set(inst.title) & train_chars)]
    return train, test
