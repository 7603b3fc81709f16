"""Node-label vocabulary and the node/edge embedding tables."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DataError, EmptyCorpus, ShapeMismatch
from .fa_ast import NUM_EDGE_TYPES, FlowGraph
from .nn import ParamStore

UNK = "<unk>"
EMBED_INIT = 0.05
VOCAB_FORMAT_VERSION = 1


class Vocabulary:
    """Dense label -> index map; index 0 is always the unknown label."""

    def __init__(self, labels: Iterable[str]):
        self.labels = [UNK] + [lab for lab in labels if lab != UNK]
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise DataError("vocabulary labels must be unique")

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.labels == other.labels

    @property
    def size(self) -> int:
        return len(self.labels)

    def lookup(self, label: str) -> int:
        return self.index.get(label, 0)

    def encode_labels(self, labels: Iterable[str]) -> np.ndarray:
        return np.fromiter((self.index.get(lab, 0) for lab in labels), dtype=np.int64)

    def to_lines(self) -> str:
        head = json.dumps({"format": "vocabulary", "version": VOCAB_FORMAT_VERSION})
        body = (json.dumps({"label": lab, "index": i}, ensure_ascii=False) for i, lab in enumerate(self.labels))
        return "\n".join([head, *body]) + "\n"

    @classmethod
    def from_lines(cls, text: str) -> "Vocabulary":
        entries = []
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            if "label" in rec:
                entries.append((int(rec["index"]), rec["label"]))
        entries.sort()
        if [i for i, _ in entries] != list(range(len(entries))) or not entries or entries[0][1] != UNK:
            raise DataError("vocabulary file must list dense indices starting with the unknown label")
        return cls(lab for _, lab in entries[1:])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_lines(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_lines(Path(path).read_text(encoding="utf-8"))


def build_vocab(corpus: Iterable[FlowGraph], min_count: int = 1) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter = Counter()
    n_graphs = 0
    for graph in corpus:
        counts.update(graph.node_labels)
        n_graphs += 1
    if n_graphs == 0:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    kept = sorted((lab for lab, c in counts.items() if c >= min_count and lab != UNK),
                  key=lambda lab: (-counts[lab], lab))
    return Vocabulary(kept)


@dataclass
class EmbeddingTables:
    node_table: np.ndarray  # vocab_size x d
    edge_table: np.ndarray  # NUM_EDGE_TYPES x d

    @property
    def d(self) -> int:
        return self.node_table.shape[1]

    @classmethod
    def from_store(cls, store: ParamStore) -> "EmbeddingTables":
        return cls(store["node_table"], store["edge_table"])


def init_tables(store: ParamStore, vocab_size: int, d: int, rng: np.random.Generator) -> EmbeddingTables:
    store.add("node_table", rng.uniform(-EMBED_INIT, EMBED_INIT, size=(vocab_size, d)))
    store.add("edge_table", rng.uniform(-EMBED_INIT, EMBED_INIT, size=(NUM_EDGE_TYPES, d)))
    return EmbeddingTables.from_store(store)


def encode(graph: FlowGraph, vocab: Vocabulary, tables: EmbeddingTables) -> np.ndarray:
    """Initial node states, one row per node in the graph's own numbering."""
    if tables.node_table.shape[0] != vocab.size:
        raise ShapeMismatch(f"node table has {tables.node_table.shape[0]} rows for a vocabulary of {vocab.size}")
    return tables.node_table[vocab.encode_labels(graph.node_labels)]
