"""Sequence classifier: GRU over character embeddings plus softmax head.

A title is cut or right-padded to a fixed length, embedded character by
character (lookup table, glyph CNN, or their early fusion), folded
through a GRU into a single hidden state, and classified by a linear
softmax layer. Training is plain minibatch Adam on the cross-entropy
loss; everything is deterministic given (seed, corpus, config).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import fusion as fusion_mod
from . import rng
from .embed import (
    CNN_FIELDS,
    EMBED_DIM,
    PAD_ID,
    CharVocab,
    LookupParams,
    VisualCnnParams,
    init_lookup,
    init_visual_cnn,
    lookup_embed_batch,
    visual_embed_batch,
)
from .errors import ConfigError, ContractViolation
from .glyphs import GRID
from .optim import Adam
from .tensor import Tensor, affine, cross_entropy, gather_rows, sigmoid, softmax, tanh

MODEL_KINDS = ("lookup", "visual", "early")

CHECKPOINT_FORMAT = 1

_BLANK = -1  # padding sentinel in visual codepoint grids


@dataclass
class GruParams:
    w_z: Tensor
    w_r: Tensor
    w_h: Tensor
    u_z: Tensor
    u_r: Tensor
    u_h: Tensor
    b_z: Tensor
    b_r: Tensor
    b_h: Tensor

    def named(self) -> list[tuple[str, Tensor]]:
        return [(n, getattr(self, n)) for n in ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h")]


@dataclass
class HeadParams:
    weight: Tensor  # (L, d_h)
    bias: Tensor    # (L,)


@dataclass
class TrainConfig:
    batch_size: int = 400
    seq_len: int = 10
    d_c: int = EMBED_DIM
    d_h: int = EMBED_DIM
    eta: float = 0.001
    epochs: int = 10
    seed: int = 0
    model: str = "lookup"

    def __post_init__(self):
        for name in ("batch_size", "seq_len", "d_c", "d_h", "epochs"):
            if getattr(self, name) < (0 if name == "epochs" else 1):
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.eta < 0:
            raise ConfigError(f"eta must be nonnegative, got {self.eta}")
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")


def pad_or_truncate(seq, target_len: int, pad):
    """First target_len items of seq, right-padded with ``pad`` if short."""
    if target_len < 1:
        raise ContractViolation(f"target length must be >= 1, got {target_len}")
    seq = list(seq[:target_len])
    return seq + [pad] * (target_len - len(seq))


def init_gru(seed: int, d_c: int, d_h: int) -> GruParams:
    gen = rng.substream(seed, rng.STREAM_GRU)

    def w():
        bound = np.sqrt(6.0 / (d_c + d_h))
        return Tensor(gen.uniform(-bound, bound, size=(d_h, d_c)))

    def u():
        bound = np.sqrt(6.0 / (2 * d_h))
        return Tensor(gen.uniform(-bound, bound, size=(d_h, d_h)))

    return GruParams(
        w_z=w(), w_r=w(), w_h=w(),
        u_z=u(), u_r=u(), u_h=u(),
        b_z=Tensor(np.zeros(d_h)), b_r=Tensor(np.zeros(d_h)), b_h=Tensor(np.zeros(d_h)),
    )


def init_head(seed: int, d_h: int, n_classes: int) -> HeadParams:
    if n_classes < 2:
        raise ConfigError(f"need at least 2 categories, got {n_classes}")
    gen = rng.substream(seed, rng.STREAM_HEAD)
    bound = np.sqrt(6.0 / (d_h + n_classes))
    return HeadParams(
        weight=Tensor(gen.uniform(-bound, bound, size=(n_classes, d_h))),
        bias=Tensor(np.zeros(n_classes)),
    )


def gru_step(params: GruParams, h_prev: Tensor, x: Tensor) -> Tensor:
    """One gated recurrent update.

    z and r gates squash affine maps of (x, h_prev); the candidate state
    uses the reset-scaled h_prev; the new state interpolates between
    h_prev and the candidate by the update gate.
    """
    z = sigmoid(affine(x, params.w_z, params.b_z) + affine(h_prev, params.u_z))
    r = sigmoid(affine(x, params.w_r, params.b_r) + affine(h_prev, params.u_r))
    h_tilde = tanh(affine(x, params.w_h, params.b_h) + affine(r * h_prev, params.u_h))
    return (1.0 - z) * h_prev + z * h_tilde


def encode_sequence(params: GruParams, embeds) -> Tensor:
    """Fold gru_step over the embedding sequence from an all-zero state."""
    if not embeds:
        raise ContractViolation("cannot encode an empty embedding sequence")
    d_h = params.u_z.shape[0]
    lead = embeds[0].shape[:-1]
    h = Tensor(np.zeros(lead + (d_h,)))
    for x in embeds:
        h = gru_step(params, h, x)
    return h


def classify(head: HeadParams, e: Tensor) -> Tensor:
    """Posterior class probabilities from an encoded title."""
    if e.shape[-1] != head.weight.shape[1]:
        raise ContractViolation(f"encoder width {e.shape[-1]} != head width {head.weight.shape[1]}")
    return softmax(affine(e, head.weight, head.bias))


class TextClassifier:
    """A trainable title classifier of kind lookup, visual, or early."""

    def __init__(self, kind, vocab, categories, seq_len, d_c, d_h,
                 lookup=None, cnn=None, fuse=None, gru=None, head=None,
                 provider=None, provider_config=None):
        if kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {kind!r}")
        if kind in ("visual", "early") and provider is None:
            raise ConfigError(f"the {kind} model needs a glyph provider")
        self.kind = kind
        self.vocab: CharVocab = vocab
        self.categories = list(categories)
        self.seq_len = int(seq_len)
        self.d_c = int(d_c)
        self.d_h = int(d_h)
        self.lookup = lookup
        self.cnn = cnn
        self.fuse = fuse
        self.gru = gru
        self.head = head
        self.provider = provider
        self.provider_config = provider_config

    @classmethod
    def build(cls, vocab, categories, cfg: TrainConfig, provider=None, provider_config=None):
        """Fresh deterministic initialization for the configured kind."""
        kind = cfg.model
        lookup = init_lookup(cfg.seed, vocab.size, cfg.d_c) if kind in ("lookup", "early") else None
        cnn = init_visual_cnn(cfg.seed, cfg.d_c) if kind in ("visual", "early") else None
        fuse = fusion_mod.init_early_fusion(cfg.seed, cfg.d_c) if kind == "early" else None
        return cls(
            kind, vocab, categories, cfg.seq_len, cfg.d_c, cfg.d_h,
            lookup=lookup, cnn=cnn, fuse=fuse,
            gru=init_gru(cfg.seed, cfg.d_c, cfg.d_h),
            head=init_head(cfg.seed, cfg.d_h, len(categories)),
            provider=provider, provider_config=provider_config,
        )

    def warm_start(self, lookup_model=None, visual_model=None) -> None:
        """Copy embedder weights from separately trained models."""
        if lookup_model is not None:
            if self.lookup is None or lookup_model.lookup is None:
                raise ConfigError("no lookup table to warm start from")
            self.lookup.table.data[...] = lookup_model.lookup.table.data
        if visual_model is not None:
            if self.cnn is None or visual_model.cnn is None:
                raise ConfigError("no glyph CNN to warm start from")
            for (_, dst), (_, src) in zip(self.cnn.named(), visual_model.cnn.named()):
                dst.data[...] = src.data

    def parameters(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        if self.lookup is not None:
            out.append(("lookup.table", self.lookup.table))
        if self.cnn is not None:
            out += [(f"cnn.{n}", t) for n, t in self.cnn.named()]
        if self.fuse is not None:
            out += [("fuse.weight", self.fuse.weight), ("fuse.bias", self.fuse.bias)]
        out += [(f"gru.{n}", t) for n, t in self.gru.named()]
        out += [("head.weight", self.head.weight), ("head.bias", self.head.bias)]
        return out

    def param_tensors(self) -> list[Tensor]:
        return [t for _, t in self.parameters()]

    # -- embedding ------------------------------------------------------

    def _lookup_ids(self, titles) -> np.ndarray:
        ids = np.empty((len(titles), self.seq_len), dtype=np.intp)
        for i, title in enumerate(titles):
            ids[i] = pad_or_truncate([self.vocab.id_of(ord(ch)) for ch in title], self.seq_len, PAD_ID)
        return ids

    def _visual_rows(self, titles) -> tuple[Tensor, np.ndarray]:
        """CNN embeddings of the batch's distinct glyphs plus row indices.

        Each distinct codepoint is rendered and embedded once per batch;
        per-position embeddings are gathers into that table, so repeated
        characters share one forward pass.
        """
        cps = np.empty((len(titles), self.seq_len), dtype=np.intp)
        for i, title in enumerate(titles):
            cps[i] = pad_or_truncate([ord(ch) for ch in title], self.seq_len, _BLANK)
        uniq = np.unique(cps)
        images = np.stack([
            np.zeros((GRID, GRID)) if cp < 0 else self.provider.render(int(cp)).pixels
            for cp in uniq
        ])
        table = visual_embed_batch(self.cnn, images)  # (U, d_c)
        rows = np.searchsorted(uniq, cps)
        return table, rows

    def embed_timesteps(self, titles) -> list[Tensor]:
        """Per-position embedding tensors of shape (B, d_c)."""
        steps: list[Tensor] = []
        if self.kind == "lookup":
            ids = self._lookup_ids(titles)
            steps = [lookup_embed_batch(self.lookup, ids[:, t]) for t in range(self.seq_len)]
        elif self.kind == "visual":
            table, rows = self._visual_rows(titles)
            steps = [gather_rows(table, rows[:, t]) for t in range(self.seq_len)]
        else:
            ids = self._lookup_ids(titles)
            table, rows = self._visual_rows(titles)
            for t in range(self.seq_len):
                lv = lookup_embed_batch(self.lookup, ids[:, t])
                vv = gather_rows(table, rows[:, t])
                steps.append(fusion_mod.early_fuse_embed(lv, vv, self.fuse))
        return steps

    # -- inference ------------------------------------------------------

    def forward_batch(self, titles) -> Tensor:
        """Probability rows (B, L) with gradient tracking."""
        e = encode_sequence(self.gru, self.embed_timesteps(titles))
        return classify(self.head, e)

    def predict(self, title: str) -> np.ndarray:
        return self.predict_batch([title])[0]

    def predict_batch(self, titles) -> np.ndarray:
        return self.forward_batch(titles).data.copy()


@dataclass
class EpochReport:
    epoch: int
    mean_loss: float
    train_acc: float
    valid_acc: float | None = None
    step_losses: list[float] = field(default_factory=list)


def _onehot(labels, n_classes: int) -> np.ndarray:
    t = np.zeros((len(labels), n_classes))
    t[np.arange(len(labels)), labels] = 1.0
    return t


def train_epoch(model: TextClassifier, instances, cfg: TrainConfig, opt: Adam, epoch: int) -> EpochReport:
    """One pass over the training split in deterministic shuffled order.

    The loss of a partial final batch is still averaged by its actual
    size. Returns the instance-weighted mean loss and training accuracy
    measured on the pre-update forward passes.
    """
    if not instances:
        raise ConfigError("cannot train on an empty corpus")
    n = len(instances)
    order = rng.substream(cfg.seed, rng.STREAM_SHUFFLE, epoch).permutation(n)
    n_classes = len(model.categories)

    total_loss = 0.0
    correct = 0
    step_losses: list[float] = []
    for start in range(0, n, cfg.batch_size):
        batch = [instances[i] for i in order[start : start + cfg.batch_size]]
        titles = [b.title for b in batch]
        labels = np.asarray([b.label for b in batch])
        probs = model.forward_batch(titles)
        loss = cross_entropy(probs, _onehot(labels, n_classes))
        opt.zero_grad()
        loss.backward()
        opt.step()
        step_losses.append(loss.item())
        total_loss += loss.item() * len(batch)
        correct += int((probs.data.argmax(axis=1) == labels).sum())
    return EpochReport(epoch=epoch, mean_loss=total_loss / n, train_acc=correct / n, step_losses=step_losses)


def eval_accuracy(model: TextClassifier, instances, batch_size: int = 256) -> float:
    if not instances:
        raise ContractViolation("accuracy of an empty instance list is undefined")
    correct = 0
    for start in range(0, len(instances), batch_size):
        chunk = instances[start : start + batch_size]
        probs = model.predict_batch([c.title for c in chunk])
        correct += int((probs.argmax(axis=1) == np.asarray([c.label for c in chunk])).sum())
    return correct / len(instances)


def train_model(train, valid, cfg: TrainConfig, categories, provider=None, provider_config=None,
                warm_lookup=None, warm_visual=None, target_train_acc=None):
    """Train a fresh model; keep the parameters of the best validation epoch.

    The vocabulary is built from the training split only. With no
    validation split the final parameters are kept. Stops early once
    target_train_acc is reached, when given.
    """
    vocab = CharVocab.from_titles([inst.title for inst in train])
    model = TextClassifier.build(vocab, categories, cfg, provider=provider, provider_config=provider_config)
    if warm_lookup is not None or warm_visual is not None:
        model.warm_start(warm_lookup, warm_visual)
    opt = Adam(model.param_tensors(), eta=cfg.eta)

    history: list[EpochReport] = []
    best_acc = -1.0
    best_state = None
    for epoch in range(cfg.epochs):
        report = train_epoch(model, train, cfg, opt, epoch)
        if valid:
            report.valid_acc = eval_accuracy(model, valid, cfg.batch_size)
            if report.valid_acc > best_acc:
                best_acc = report.valid_acc
                best_state = [t.data.copy() for t in model.param_tensors()]
        history.append(report)
        if target_train_acc is not None and report.train_acc >= target_train_acc:
            break
    if best_state is not None:
        for t, saved in zip(model.param_tensors(), best_state):
            t.data[...] = saved
    return model, history


def save_epoch_log(path, history) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in history:
            rec = {"epoch": r.epoch, "mean_loss": r.mean_loss, "train_acc": r.train_acc, "valid_acc": r.valid_acc}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ----------------------------------------------------------------------
# Checkpoints: one JSON header line, then little-endian float32 blobs in
# the header's declared tensor order. Round-trips are bit-exact at
# 32-bit precision.
# ----------------------------------------------------------------------

def make_provider(config):
    """Build a glyph provider from its checkpoint/run-config description."""
    if config is None:
        return None
    from .fixtures import FixtureProvider
    from .glyphs import FontProvider

    if not isinstance(config, dict) or "provider" not in config:
        raise ConfigError(f"bad glyph provider config: {config!r}")
    extra = set(config) - {"provider", "fixture_set", "font_path", "pixel_size"}
    if extra:
        raise ConfigError(f"unknown glyph config keys: {sorted(extra)}")
    if config["provider"] == "fixture":
        return FixtureProvider(config.get("fixture_set", "radicals-v1"))
    if config["provider"] == "font":
        if "font_path" not in config:
            raise ConfigError("font provider needs a font_path")
        return FontProvider(config["font_path"], config.get("pixel_size", 128))
    raise ConfigError(f"unknown glyph provider {config['provider']!r}")


def save_checkpoint(model: TextClassifier, path) -> None:
    named = model.parameters()
    header = {
        "format": CHECKPOINT_FORMAT,
        "kind": model.kind,
        "seq_len": model.seq_len,
        "d_c": model.d_c,
        "d_h": model.d_h,
        "categories": model.categories,
        "vocab": model.vocab.codepoints,
        "glyphs": model.provider_config,
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in named],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for _, t in named:
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def load_checkpoint(path, provider=None) -> TextClassifier:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: not a checkpoint file: {exc}") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: unsupported checkpoint format {header.get('format')!r}")

    tensors: dict[str, Tensor] = {}
    offset = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        raw = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        if raw.size != count:
            raise ConfigError(f"{path}: truncated parameter blob at {entry['name']}")
        offset += count * 4
        tensors[entry["name"]] = Tensor(raw.astype(np.float64).reshape(shape))

    kind = header["kind"]
    vocab = CharVocab(header["vocab"])
    if provider is None:
        provider = make_provider(header.get("glyphs"))

    def take(name):
        if name not in tensors:
            raise ConfigError(f"{path}: checkpoint is missing tensor {name}")
        return tensors[name]

    lookup = LookupParams(take("lookup.table")) if kind in ("lookup", "early") else None
    cnn = None
    if kind in ("visual", "early"):
        cnn = VisualCnnParams(*[take(f"cnn.{n}") for n in CNN_FIELDS])
    fuse = None
    if kind == "early":
        fuse = fusion_mod.EarlyFusionParams(take("fuse.weight"), take("fuse.bias"))
    gru = GruParams(**{n: take(f"gru.{n}") for n in ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h")})
    head = HeadParams(take("head.weight"), take("head.bias"))

    return TextClassifier(
        kind, vocab, header["categories"], header["seq_len"], header["d_c"], header["d_h"],
        lookup=lookup, cnn=cnn, fuse=fuse, gru=gru, head=head,
        provider=provider, provider_config=header.get("glyphs"),
    )
