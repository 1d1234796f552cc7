"""Combining lookup and visual character models.

Three schemes: early fusion concatenates the two per-character
embeddings and projects back to d_c before the sequence encoder; late
fusion averages the two output distributions; fallback fusion routes an
instance to the visual model when its characters are rare enough in the
training set, and to the lookup model otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import rng
from .corpus import FrequencyTable
from .errors import ContractViolation
from .tensor import Tensor, affine, concat, relu

PROB_TOL = 1e-6  # inputs to late fusion must sum to 1 within this


@dataclass
class EarlyFusionParams:
    """Projection reducing a concatenated 2*d_c embedding back to d_c."""

    weight: Tensor  # (d_c, 2*d_c)
    bias: Tensor    # (d_c,)

    @property
    def d_c(self) -> int:
        return self.weight.shape[0]


def init_early_fusion(seed: int, d_c: int) -> EarlyFusionParams:
    gen = rng.substream(seed, rng.STREAM_FUSION)
    bound = np.sqrt(6.0 / (3 * d_c))  # fan_in 2*d_c, fan_out d_c
    w = gen.uniform(-bound, bound, size=(d_c, 2 * d_c))
    return EarlyFusionParams(weight=Tensor(w), bias=Tensor(np.zeros(d_c)))


def early_fuse_embed(lookup_vec: Tensor, visual_vec: Tensor, params: EarlyFusionParams) -> Tensor:
    """relu(W @ concat(lookup, visual) + b); differentiable into both inputs."""
    d_c = params.d_c
    if lookup_vec.shape[-1] != d_c or visual_vec.shape[-1] != d_c:
        raise ContractViolation(
            f"fusion inputs must have width {d_c}, got {lookup_vec.shape} and {visual_vec.shape}"
        )
    return relu(affine(concat([lookup_vec, visual_vec], axis=-1), params.weight, params.bias))


def late_fuse_predict(p_lookup, p_visual) -> np.ndarray:
    """Elementwise mean of two probability distributions."""
    a = np.asarray(p_lookup, dtype=np.float64)
    b = np.asarray(p_visual, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractViolation(f"distribution shapes differ: {a.shape} vs {b.shape}")
    for name, p in (("lookup", a), ("visual", b)):
        if abs(p.sum() - 1.0) > PROB_TOL:
            raise ContractViolation(f"{name} distribution sums to {p.sum()}, not 1")
    return (a + b) / 2.0


@dataclass
class FallbackPolicy:
    """Route to the visual model at or below the frequency threshold."""

    threshold: float = 0.0
    table: Mapping[str, int] | FrequencyTable = field(default_factory=dict)

    def count(self, char: str) -> int:
        if isinstance(self.table, FrequencyTable):
            return self.table.get(char)
        return self.table.get(char, 0)


def avg_char_frequency(title: str, table) -> float:
    """Mean training-set occurrence count of the title's characters.

    Unseen characters count 0. Computed over the full, untruncated title.
    """
    if not title:
        raise ContractViolation("average character frequency of an empty title is undefined")
    if isinstance(table, FrequencyTable):
        counts = [table.get(ch) for ch in title]
    else:
        counts = [table.get(ch, 0) for ch in title]
    return float(sum(counts)) / len(title)


def fallback_route(title: str, policy: FallbackPolicy) -> str:
    freq = avg_char_frequency(title, policy.table)
    return "visual" if freq <= policy.threshold else "lookup"


def fallback_predict(title: str, lookup_model, visual_model, policy: FallbackPolicy) -> np.ndarray:
    """Prediction of exactly one constituent model, chosen by rarity."""
    if fallback_route(title, policy) == "visual":
        return visual_model.predict(title)
    return lookup_model.predict(title)
