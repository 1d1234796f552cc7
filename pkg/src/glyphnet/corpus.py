"""Labeled title corpora.

Builds classification corpora offline from two TSV inputs: a category
edge list (parent -> child) and an article membership list (title ->
category). Articles are labeled with the main category that minimizes
their depth in the category graph, filtered, split 6:2:2, and counted
into a character frequency table.
"""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter, deque
from dataclasses import dataclass, field

from .errors import ConfigError, ContractViolation, DataError
from .rng import STREAM_SPLIT, substream

# The twelve main categories, in tie-break priority order.
DEFAULT_CATEGORIES = (
    "Geography",
    "Sports",
    "Arts",
    "Military",
    "Economics",
    "Transportation",
    "Health Science",
    "Education",
    "Food and Culture",
    "Religion and Belief",
    "Agriculture",
    "Electronics",
)

SPLITS = ("train", "valid", "test")

_COLON_RE = re.compile(r".*:.*")


@dataclass
class Instance:
    """One labeled title."""

    title: str
    label: int
    split: str | None = None


@dataclass
class FrequencyTable:
    """Character occurrence counts over training-split titles."""

    counts: dict[str, int]
    total: int

    def get(self, char: str) -> int:
        return self.counts.get(char, 0)


class CategoryGraph:
    """Directed category graph with designated root categories.

    Real category systems contain cycles; traversal uses visited sets
    and terminates regardless. Adjacency lists are kept sorted so depth
    computations do not depend on edge file ordering.
    """

    def __init__(self, edges, roots) -> None:
        self.roots = list(roots)
        if len(set(self.roots)) != len(self.roots):
            raise DataError("duplicate root categories")
        children: dict[str, set[str]] = {}
        nodes = set(self.roots)
        for parent, child in edges:
            nodes.add(parent)
            nodes.add(child)
            children.setdefault(parent, set()).add(child)
        self.nodes = nodes
        self.children = {p: sorted(cs) for p, cs in children.items()}

    @classmethod
    def from_tsv(cls, path, roots) -> "CategoryGraph":
        edges = []
        for lineno, parts in _iter_tsv(path):
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'parent<TAB>child'")
            edges.append((parts[0], parts[1]))
        return cls(edges, roots)

    def depths_from(self, root: str) -> dict[str, int]:
        """BFS depth of every category reachable from one root."""
        if root not in self.nodes:
            raise DataError(f"root category {root!r} not in graph")
        depth = {root: 0}
        queue = deque([root])
        while queue:
            cat = queue.popleft()
            for child in self.children.get(cat, ()):
                if child not in depth:
                    depth[child] = depth[cat] + 1
                    queue.append(child)
        return depth


def assign_labels_min_depth(graph: CategoryGraph, memberships: dict[str, set[str]]) -> dict[str, str]:
    """Label each article with the root that minimizes its depth.

    An article's depth under a root is 1 + the BFS depth of its
    shallowest member category. Ties go to the earlier root in the
    graph's priority order; articles unreachable from every root are
    dropped.
    """
    unknown = sorted({c for cats in memberships.values() for c in cats if c not in graph.nodes})
    if unknown:
        raise DataError(f"unknown categories in memberships: {', '.join(unknown)}")
    root_depths = {root: graph.depths_from(root) for root in graph.roots}

    labels: dict[str, str] = {}
    for article, cats in memberships.items():
        best: tuple[int, int] | None = None  # (depth, root priority)
        for pri, root in enumerate(graph.roots):
            depths = root_depths[root]
            reach = [depths[c] for c in cats if c in depths]
            if not reach:
                continue
            cand = (1 + min(reach), pri)
            if best is None or cand < best:
                best = cand
        if best is not None:
            labels[article] = graph.roots[best[1]]
    return labels


def filter_titles(titles) -> list[str]:
    """Drop special pages: any title matching `.*:.*`. Order preserved."""
    return [t for t in titles if not _COLON_RE.fullmatch(t)]


def split_corpus(instances: list[Instance], seed: int) -> list[Instance]:
    """Deterministically shuffle and assign 6:2:2 splits.

    Sizes use floor for valid/test with the remainder going to train,
    so 10 instances split 6/2/2 and 11 split 7/2/2. Returns new
    Instance objects in shuffled order.
    """
    n = len(instances)
    if n < 5:
        raise DataError(f"need at least 5 instances to split, got {n}")
    order = substream(seed, STREAM_SPLIT).permutation(n)
    n_valid = n_test = n // 5
    n_train = n - n_valid - n_test
    out = []
    for pos, idx in enumerate(order):
        inst = instances[idx]
        split = "train" if pos < n_train else ("valid" if pos < n_train + n_valid else "test")
        out.append(Instance(title=inst.title, label=inst.label, split=split))
    return out


def char_frequency_table(train_instances) -> FrequencyTable:
    """Count character occurrences (with multiplicity) over training titles."""
    counts: Counter[str] = Counter()
    n = 0
    for inst in train_instances:
        counts.update(inst.title)
        n += 1
    if n == 0:
        raise DataError("cannot build a frequency table from an empty training split")
    return FrequencyTable(counts=dict(counts), total=sum(counts.values()))


# ----------------------------------------------------------------------
# File formats (all UTF-8 TSV, one record per line)
# ----------------------------------------------------------------------

def _iter_tsv(path):
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                yield lineno, line.split("\t")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def load_corpus_tsv(path, categories) -> list[Instance]:
    """Parse `title<TAB>category-name` lines against a category list."""
    index = {name: i for i, name in enumerate(categories)}
    out = []
    for lineno, parts in _iter_tsv(path):
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'title<TAB>category'")
        title, cat = parts
        if not title:
            raise DataError(f"{path}:{lineno}: empty title")
        if cat not in index:
            raise DataError(f"{path}:{lineno}: unknown category {cat!r}")
        out.append(Instance(title=title, label=index[cat]))
    return out


def save_corpus_tsv(path, instances, categories) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(f"{inst.title}\t{categories[inst.label]}\n")


def load_memberships_tsv(path) -> dict[str, set[str]]:
    """Parse `article-title<TAB>category-name` lines (repeatable per article)."""
    memberships: dict[str, set[str]] = {}
    for lineno, parts in _iter_tsv(path):
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'title<TAB>category'")
        title, cat = parts
        if not title:
            raise DataError(f"{path}:{lineno}: empty title")
        memberships.setdefault(title, set()).add(cat)
    return memberships


def title_hash(title: str) -> str:
    return hashlib.sha256(title.encode("utf-8")).hexdigest()


def save_split_manifest(path, instances) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(f"{title_hash(inst.title)}\t{inst.split}\n")


def save_frequency_table(path, table: FrequencyTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for char in sorted(table.counts):
            fh.write(f"{ord(char)}\t{char}\t{table.counts[char]}\n")


def load_frequency_table(path) -> FrequencyTable:
    counts: dict[str, int] = {}
    for lineno, parts in _iter_tsv(path):
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 'codepoint<TAB>char<TAB>count'")
        try:
            cp, count = int(parts[0]), int(parts[2])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad integer field") from exc
        counts[chr(cp)] = count
    return FrequencyTable(counts=counts, total=sum(counts.values()))


def summarize(instances, categories) -> dict:
    """Per-category counts plus title length mean and standard deviation."""
    lengths = [len(inst.title) for inst in instances]
    by_cat = Counter(categories[inst.label] for inst in instances)
    mean = sum(lengths) / len(lengths) if lengths else 0.0
    sd = math.sqrt(sum((x - mean) ** 2 for x in lengths) / len(lengths)) if lengths else 0.0
    return {
        "instances": len(instances),
        "per_category": {name: by_cat.get(name, 0) for name in categories},
        "title_length_mean": round(mean, 4),
        "title_length_sd": round(sd, 4),
    }
