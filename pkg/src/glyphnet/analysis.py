"""Evaluation metrics and interpretability tools.

Covers overall and rarity-stratified accuracy, the cumulative
rarest-first correctness curve, half-masking occlusion heatmaps of the
glyph CNN, and nearest-neighbor inspection of character embeddings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .embed import visual_embed
from .errors import ConfigError, ContractViolation
from .fusion import FallbackPolicy, avg_char_frequency, fallback_route, late_fuse_predict
from .glyphs import GRID, GlyphImage, mask_half, write_pgm_array


@dataclass
class EvalRecord:
    """Outcome of one test instance."""

    title: str
    gold: int
    pred: int
    probs: np.ndarray
    avg_freq: float
    route: str | None = None  # fallback fusion routing decision, if any


def accuracy(records) -> float:
    if not records:
        raise ContractViolation("accuracy of an empty record list is undefined")
    return sum(1 for r in records if r.pred == r.gold) / len(records)


def _rarity_sorted(records):
    # stable: ties keep input order
    return sorted(records, key=lambda r: r.avg_freq)


def k_rarest_accuracy(records, k: int) -> float:
    """Accuracy over the k instances with the lowest average character frequency."""
    if not 1 <= k <= len(records):
        raise ContractViolation(f"k must be in 1..{len(records)}, got {k}")
    return accuracy(_rarity_sorted(records)[:k])


def cumulative_rarity_curve(records) -> list[tuple[int, int]]:
    """(rank, cumulative correct) pairs after sorting rarest-first.

    Monotone nondecreasing; the final value is the total number of
    correct predictions. Suited to log-log plotting with rank on x.
    """
    if not records:
        raise ContractViolation("cannot build a rarity curve from no records")
    curve = []
    cum = 0
    for rank, rec in enumerate(_rarity_sorted(records), start=1):
        cum += int(rec.pred == rec.gold)
        curve.append((rank, cum))
    return curve


def save_curve_tsv(path, curve) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rank, cum in curve:
            fh.write(f"{rank}\t{cum}\n")


def save_records_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            rec = {
                "title": r.title,
                "gold": r.gold,
                "pred": r.pred,
                "probs": [float(p) for p in r.probs],
                "avg_freq": r.avg_freq,
                "route": r.route,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def evaluate(test_instances, freq_table, lookup_model=None, visual_model=None,
             fusion: str = "none", threshold: float = 0.0) -> list[EvalRecord]:
    """Run the test split through one model or a fused pair.

    fusion "none" uses whichever single model is given; "late" averages
    the two distributions; "fallback" routes each instance by average
    character frequency against the threshold.
    """
    models = [m for m in (lookup_model, visual_model) if m is not None]
    if not models:
        raise ConfigError("evaluate needs at least one model")
    if fusion not in ("none", "late", "fallback"):
        raise ConfigError(f"unknown fusion kind {fusion!r}")
    if fusion != "none" and (lookup_model is None or visual_model is None):
        raise ConfigError(f"{fusion} fusion needs both a lookup and a visual model")
    policy = FallbackPolicy(threshold=threshold, table=freq_table)

    records = []
    for inst in test_instances:
        route = None
        if fusion == "none":
            probs = models[0].predict(inst.title)
        elif fusion == "late":
            probs = late_fuse_predict(lookup_model.predict(inst.title), visual_model.predict(inst.title))
        else:
            route = fallback_route(inst.title, policy)
            probs = (visual_model if route == "visual" else lookup_model).predict(inst.title)
        records.append(EvalRecord(
            title=inst.title,
            gold=inst.label,
            pred=int(np.argmax(probs)),
            probs=probs,
            avg_freq=avg_char_frequency(inst.title, freq_table),
            route=route,
        ))
    return records


# ----------------------------------------------------------------------
# Occlusion sensitivity
# ----------------------------------------------------------------------

# Masked variants, keyed by the KEPT half; the distance for each variant
# measures how much the REMOVED half contributed to the embedding.
_KEEPS = ("upper", "lower", "left", "right")


@dataclass
class OcclusionHeatmap:
    distances: dict  # keep -> L2 distance to the full-image embedding
    corners: np.ndarray  # (2, 2) grid: [[top-left, top-right], [bottom-left, bottom-right]]
    overlay: np.ndarray  # (36, 36) opacity field in [0, 1]


def occlusion_heatmap(model, img: GlyphImage) -> OcclusionHeatmap:
    """Half-masking sensitivity of the glyph CNN embedding.

    Each of the four variants keeps one half of the image and writes the
    other half to background. A corner's score sums the two distances
    whose removed halves cover it, so a corner is hot when hiding it
    moves the embedding a lot. Corner scores are normalized by their
    maximum and bilinearly upsampled to a 36x36 opacity overlay meant to
    modulate the glyph's ink.
    """
    if model.cnn is None:
        raise ConfigError("occlusion analysis needs a model with a glyph CNN")

    def embed(image):
        return visual_embed(model.cnn, image).data

    full = embed(img)
    d = {keep: float(np.linalg.norm(embed(mask_half(img, keep)) - full)) for keep in _KEEPS}

    corners = np.array([
        [d["lower"] + d["right"], d["lower"] + d["left"]],
        [d["upper"] + d["right"], d["upper"] + d["left"]],
    ])
    peak = corners.max()
    if peak > 0:
        corners = corners / peak
    fy = np.linspace(0.0, 1.0, GRID)[:, None]
    fx = np.linspace(0.0, 1.0, GRID)[None, :]
    overlay = (
        corners[0, 0] * (1 - fy) * (1 - fx)
        + corners[0, 1] * (1 - fy) * fx
        + corners[1, 0] * fy * (1 - fx)
        + corners[1, 1] * fy * fx
    )
    return OcclusionHeatmap(distances=d, corners=corners, overlay=overlay)


def modulated_glyph(img: GlyphImage, heatmap: OcclusionHeatmap) -> np.ndarray:
    """The glyph's ink scaled by the overlay (darker = more contribution)."""
    return img.pixels * heatmap.overlay


def save_heatmap(path_prefix, img: GlyphImage, heatmap: OcclusionHeatmap) -> None:
    """Write overlay and modulated-glyph PGMs plus a JSON sidecar."""
    write_pgm_array(heatmap.overlay, f"{path_prefix}.overlay.pgm")
    write_pgm_array(modulated_glyph(img, heatmap), f"{path_prefix}.glyph.pgm")
    sidecar = {
        "distances": {k: heatmap.distances[k] for k in _KEEPS},
        "corners": heatmap.corners.tolist(),
    }
    with open(f"{path_prefix}.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)


# ----------------------------------------------------------------------
# Nearest neighbors
# ----------------------------------------------------------------------

def char_embedding(model, char: str) -> np.ndarray:
    """The model's embedding of one character (lookup row or CNN output)."""
    if model.kind == "lookup":
        return model.lookup.table.data[model.vocab.id_of(ord(char))].copy()
    if model.cnn is None:
        raise ConfigError(f"model kind {model.kind!r} has no single-character embedding")
    return visual_embed(model.cnn, model.provider.render(ord(char))).data


def knn_chars(model, chars, query: str, k: int = 6) -> list[tuple[str, float]]:
    """k nearest characters to the query by embedding L2 distance.

    The query is excluded from the candidates; exact distance ties are
    broken by codepoint order.
    """
    chars = list(dict.fromkeys(chars))  # dedupe, keep order
    if k < 1 or k >= len(chars):
        raise ContractViolation(f"k must satisfy 1 <= k < {len(chars)}, got {k}")
    q = char_embedding(model, query)
    scored = [
        (float(np.linalg.norm(char_embedding(model, ch) - q)), ord(ch), ch)
        for ch in chars
        if ch != query
    ]
    scored.sort(key=lambda s: (s[0], s[1]))
    return [(ch, dist) for dist, _, ch in scored[:k]]
