"""Per-character embeddings: trainable lookup table and CNN glyph encoder.

The lookup path selects a row of a |C| x d_c matrix by character id
(mathematically a one-hot product, so gradients touch only the rows
present in a batch). The visual path runs the 36x36 glyph image through
a 3-conv / 2-fc network whose spatial extents shrink 36 -> 34 -> 17 ->
15 -> 7 -> 5, flattening to 800 features before the fully connected
layers. Both paths emit d_c = 128 dimensional embeddings; the visual
one ends in a ReLU and is therefore nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError, ContractViolation
from .glyphs import GRID, GlyphImage
from .tensor import Tensor, affine, conv2d, gather_rows, maxpool2d, relu, reshape

EMBED_DIM = 128
CONV_CHANNELS = 32
FLAT_FEATURES = CONV_CHANNELS * 5 * 5  # 800 after the conv stack

PAD_ID = 0
UNK_ID = 1
RESERVED = 2


class CharVocab:
    """Ordered character vocabulary with reserved PAD (0) and UNK (1) ids.

    Characters are stored sorted by codepoint so a vocabulary rebuilt
    from the same training split is always identical.
    """

    def __init__(self, codepoints) -> None:
        self.codepoints: list[int] = sorted(set(int(cp) for cp in codepoints))
        self._index = {cp: RESERVED + i for i, cp in enumerate(self.codepoints)}

    @classmethod
    def from_titles(cls, titles) -> "CharVocab":
        return cls(ord(ch) for title in titles for ch in title)

    @property
    def size(self) -> int:
        return RESERVED + len(self.codepoints)

    def id_of(self, codepoint: int) -> int:
        return self._index.get(int(codepoint), UNK_ID)

    def __contains__(self, codepoint: int) -> bool:
        return int(codepoint) in self._index


@dataclass
class LookupParams:
    table: Tensor  # (vocab size, d_c), rows are character embeddings

    @property
    def d_c(self) -> int:
        return self.table.shape[1]


CNN_FIELDS = (
    "conv1_k", "conv1_b", "conv2_k", "conv2_b", "conv3_k", "conv3_b",
    "fc1_w", "fc1_b", "fc2_w", "fc2_b",
)


@dataclass
class VisualCnnParams:
    conv1_k: Tensor
    conv1_b: Tensor
    conv2_k: Tensor
    conv2_b: Tensor
    conv3_k: Tensor
    conv3_b: Tensor
    fc1_w: Tensor
    fc1_b: Tensor
    fc2_w: Tensor
    fc2_b: Tensor

    def named(self) -> list[tuple[str, Tensor]]:
        return [(name, getattr(self, name)) for name in CNN_FIELDS]


def _glorot(gen, shape, fan_in, fan_out) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return gen.uniform(-bound, bound, size=shape)


def init_lookup(seed: int, vocab_size: int, d_c: int = EMBED_DIM) -> LookupParams:
    """Rows uniform in +-1/sqrt(d_c), PAD and UNK included like any other row."""
    if vocab_size < RESERVED:
        raise ConfigError(f"vocab size must be >= {RESERVED}, got {vocab_size}")
    gen = rng.substream(seed, rng.STREAM_LOOKUP)
    bound = 1.0 / np.sqrt(d_c)
    return LookupParams(table=Tensor(gen.uniform(-bound, bound, size=(vocab_size, d_c))))


def init_visual_cnn(seed: int, d_c: int = EMBED_DIM) -> VisualCnnParams:
    """Fan-in scaled uniform weights, zero biases; layer shapes are fixed."""
    if d_c != EMBED_DIM:
        raise ConfigError(f"the glyph CNN head is fixed at d_c={EMBED_DIM}, got {d_c}")
    c = CONV_CHANNELS

    def conv(stream, cin):
        gen = rng.substream(seed, stream)
        k = _glorot(gen, (c, cin, 3, 3), fan_in=cin * 9, fan_out=c * 9)
        return Tensor(k), Tensor(np.zeros(c))

    def fc(stream, n_in, n_out):
        gen = rng.substream(seed, stream)
        return Tensor(_glorot(gen, (n_out, n_in), n_in, n_out)), Tensor(np.zeros(n_out))

    k1, b1 = conv(rng.STREAM_CONV1, 1)
    k2, b2 = conv(rng.STREAM_CONV2, c)
    k3, b3 = conv(rng.STREAM_CONV3, c)
    w1, fb1 = fc(rng.STREAM_FC1, FLAT_FEATURES, EMBED_DIM)
    w2, fb2 = fc(rng.STREAM_FC2, EMBED_DIM, EMBED_DIM)
    return VisualCnnParams(k1, b1, k2, b2, k3, b3, w1, fb1, w2, fb2)


def init_params(seed: int, vocab_size: int, d_c: int = EMBED_DIM) -> tuple[LookupParams, VisualCnnParams]:
    """Initialize both embedders deterministically from one seed."""
    return init_lookup(seed, vocab_size, d_c), init_visual_cnn(seed, d_c)


def lookup_embed(params: LookupParams, char_id: int) -> Tensor:
    """Row ``char_id`` of the table; gradient flows only into that row."""
    if not 0 <= int(char_id) < params.table.shape[0]:
        raise ContractViolation(f"char id {char_id} out of range for table {params.table.shape}")
    return reshape(gather_rows(params.table, np.asarray([int(char_id)])), (params.d_c,))


def lookup_embed_batch(params: LookupParams, char_ids) -> Tensor:
    """Rows for a batch of char ids: (B,) -> (B, d_c)."""
    ids = np.asarray(char_ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= params.table.shape[0]):
        raise ContractViolation("char id out of range")
    return gather_rows(params.table, ids)


def _as_image_batch(img) -> np.ndarray:
    if isinstance(img, GlyphImage):
        return img.pixels[None, None]
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, None]
    elif arr.ndim == 3:  # (B, 36, 36)
        arr = arr[:, None]
    if arr.ndim != 4 or arr.shape[1] != 1 or arr.shape[2:] != (GRID, GRID):
        raise ContractViolation(f"expected {GRID}x{GRID} glyph image(s), got array of shape {np.shape(img)}")
    return arr


def visual_embed_batch(params: VisualCnnParams, images) -> Tensor:
    """CNN embeddings for a stack of glyph images: (B,36,36) -> (B,128)."""
    x = Tensor(_as_image_batch(images))
    h = relu(conv2d(x, params.conv1_k, params.conv1_b))  # (B,32,34,34)
    h = maxpool2d(h)                                     # (B,32,17,17)
    h = relu(conv2d(h, params.conv2_k, params.conv2_b))  # (B,32,15,15)
    h = maxpool2d(h)                                     # (B,32,7,7)
    h = relu(conv2d(h, params.conv3_k, params.conv3_b))  # (B,32,5,5)
    flat = reshape(h, (h.shape[0], FLAT_FEATURES))
    h = relu(affine(flat, params.fc1_w, params.fc1_b))
    return relu(affine(h, params.fc2_w, params.fc2_b))


def visual_embed(params: VisualCnnParams, img) -> Tensor:
    """Embedding of a single 36x36 glyph image, as a d_c vector."""
    out = visual_embed_batch(params, _as_image_batch(img))
    return reshape(out, (EMBED_DIM,))
