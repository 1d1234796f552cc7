"""glyphnet: character embeddings from rendered glyph images.

Characters are rasterized to 36x36 grayscale glyphs and embedded either
by a trainable lookup table or by a small CNN reading the glyph, then a
GRU encoder classifies the character sequence. The two embedding routes
can be fused (early, late, or frequency-based fallback), and analysis
tools stratify accuracy by character rarity and inspect what the CNN
attends to.
"""

from .analysis import (
    EvalRecord,
    OcclusionHeatmap,
    accuracy,
    cumulative_rarity_curve,
    evaluate,
    k_rarest_accuracy,
    knn_chars,
    occlusion_heatmap,
)
from .corpus import (
    DEFAULT_CATEGORIES,
    CategoryGraph,
    FrequencyTable,
    Instance,
    assign_labels_min_depth,
    char_frequency_table,
    filter_titles,
    load_corpus_tsv,
    split_corpus,
)
from .embed import (
    EMBED_DIM,
    PAD_ID,
    UNK_ID,
    CharVocab,
    LookupParams,
    VisualCnnParams,
    init_params,
    lookup_embed,
    visual_embed,
)
from .errors import ConfigError, ContractViolation, DataError, GlyphnetError
from .fixtures import FixtureProvider, make_overfit_corpus, make_rare_char_corpus
from .fusion import (
    EarlyFusionParams,
    FallbackPolicy,
    avg_char_frequency,
    early_fuse_embed,
    fallback_predict,
    late_fuse_predict,
)
from .glyphs import FontProvider, GlyphImage, mask_half, render_glyph, render_title
from .model import (
    TextClassifier,
    TrainConfig,
    encode_sequence,
    gru_step,
    load_checkpoint,
    pad_or_truncate,
    save_checkpoint,
    train_epoch,
    train_model,
)
from .optim import Adam
from .tensor import Tensor, backward_ops as _unused_backward_ops if False else None
