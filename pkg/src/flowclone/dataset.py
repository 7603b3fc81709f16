"""Fragment stores, labeled pair lists, splits and the synthetic clone corpus."""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import fa_ast
from .errors import DataError, DuplicateId, EmptyCorpus, FlowCloneError, GranularityError, MissingTypeTags, UnknownFragment
from .fa_ast import FlowGraph
from .java import Granularity, SourceFragment, parse_fragment

CLONE_TYPES = ("T1", "T2", "ST3", "MT3", "WT3T4", "NonClone")
PAIRS_HEADER = "# flowclone-pairs v1"
RECORDS_VERSION = 1


@dataclass(frozen=True)
class FragmentPair:
    id1: str
    id2: str
    label: int
    clone_type: str | None = None

    def __post_init__(self) -> None:
        if self.id1 == self.id2:
            raise DataError(f"pair links fragment {self.id1!r} to itself")
        if self.label not in (-1, 1):
            raise DataError(f"pair label must be -1 or +1, got {self.label!r}")
        if self.clone_type is not None and self.clone_type not in CLONE_TYPES:
            raise DataError(f"unknown clone type {self.clone_type!r}")


def content_key(fragment: SourceFragment) -> str:
    """Cache key for a fragment's graph; changes when the edge rules change."""
    h = hashlib.sha256()
    h.update(fragment.code.encode("utf-8"))
    h.update(b"\0" + fragment.granularity.value.encode())
    h.update(b"\0" + str(fa_ast.RULE_VERSION).encode())
    return h.hexdigest()


@dataclass
class FragmentStore:
    fragments: dict[str, SourceFragment] = field(default_factory=dict)
    skipped: list[dict] = field(default_factory=list)
    _graphs: dict[str, FlowGraph] = field(default_factory=dict, repr=False)

    def add(self, fragment: SourceFragment) -> None:
        if fragment.id in self.fragments:
            raise DuplicateId(f"fragment id {fragment.id!r} appears twice")
        self.fragments[fragment.id] = fragment

    def __len__(self) -> int:
        return len(self.fragments)

    def __contains__(self, fid: str) -> bool:
        return fid in self.fragments

    def ids(self) -> list[str]:
        return sorted(self.fragments)

    def graph(self, fid: str) -> FlowGraph:
        frag = self.fragments.get(fid)
        if frag is None:
            raise UnknownFragment(f"no fragment with id {fid!r}")
        key = content_key(frag)
        g = self._graphs.get(key)
        if g is None:
            g = fa_ast.build(parse_fragment(frag))
            g = FlowGraph(fid, g.num_nodes, g.node_labels, g.edges, g.positions)
            self._graphs[key] = g
        elif g.fragment_id != fid:
            g = FlowGraph(fid, g.num_nodes, g.node_labels, g.edges, g.positions)
        return g

    def graphs(self, ids: Iterable[str] | None = None) -> list[FlowGraph]:
        return [self.graph(i) for i in (self.ids() if ids is None else ids)]

    def restrict(self, ids: Iterable[str]) -> "FragmentStore":
        keep = FragmentStore(skipped=list(self.skipped))
        for i in sorted(set(ids)):
            keep.add(self.fragments[i])
        keep._graphs = self._graphs
        return keep

    def to_records(self) -> str:
        lines = [json.dumps({"format": "fragments", "version": RECORDS_VERSION})]
        for fid in self.ids():
            f = self.fragments[fid]
            lines.append(json.dumps({"id": f.id, "granularity": f.granularity.value, "code": f.code}, ensure_ascii=False))
        return "\n".join(lines) + "\n"

    def skip_report(self) -> str:
        return "".join(json.dumps(s, sort_keys=True) + "\n" for s in self.skipped)


def _granularity(value: str | None) -> Granularity | None:
    if value in (None, "", "auto"):
        return None
    for g in Granularity:
        if value.lower() == g.value.lower():
            return g
    raise DataError(f"unknown granularity {value!r}")


def _accept(store: FragmentStore, fid: str, code: str, gran: Granularity | None, source: str, eager: bool) -> None:
    """Parse-check one fragment and add it, or record why it was skipped."""
    tries = [gran] if gran else [Granularity.METHOD, Granularity.CLASS]
    err: Exception | None = None
    for g in tries:
        frag = SourceFragment(fid, code, g)
        try:
            tree = parse_fragment(frag)
            if eager:
                fa_ast.build(tree)
        except GranularityError as exc:
            err = exc
            continue
        except FlowCloneError as exc:
            err = exc
            break
        if fid in store:
            raise DuplicateId(f"fragment id {fid!r} appears twice")
        store.add(frag)
        return
    store.skipped.append({"id": fid, "source": source, "error": type(err).__name__, "message": str(err)})


def load_corpus(path: str | Path, fmt: str = "auto", granularity: str | None = None, eager: bool = True) -> FragmentStore:
    """Load fragments from a ``.java`` file, a directory of them, or a JSONL record file.

    Fragments that fail to parse land in ``store.skipped`` instead of aborting.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    gran = _granularity(granularity)
    store = FragmentStore()
    if fmt == "auto":
        fmt = "records" if path.suffix in (".jsonl", ".json") else "java"
    if fmt == "records":
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "code" not in rec:
                continue  # header
            if "id" not in rec:
                raise DataError(f"{path}:{lineno}: record without an id")
            _accept(store, str(rec["id"]), rec["code"], _granularity(rec.get("granularity")) or gran,
                    f"{path}:{lineno}", eager)
    elif fmt == "java":
        files = sorted(path.rglob("*.java")) if path.is_dir() else [path]
        for f in files:
            fid = f.relative_to(path).with_suffix("").as_posix() if path.is_dir() else f.stem
            _accept(store, fid, f.read_text(encoding="utf-8"), gran, str(f), eager)
    else:
        raise DataError(f"unknown corpus format {fmt!r}")
    if not len(store):
        raise EmptyCorpus(f"no parseable fragments in {path} ({len(store.skipped)} skipped)")
    return store


# -- pair lists ---------------------------------------------------------------

def format_pairs(pairs: Sequence[FragmentPair]) -> str:
    lines = [PAIRS_HEADER]
    lines += [f"{p.id1}\t{p.id2}\t{p.label}" + (f"\t{p.clone_type}" if p.clone_type else "") for p in pairs]
    return "\n".join(lines) + "\n"


def parse_pairs(text: str) -> list[FragmentPair]:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.rstrip("\n").split("\t")
        if len(cols) not in (3, 4):
            raise DataError(f"line {lineno}: expected 3 or 4 tab-separated columns")
        try:
            label = int(cols[2])
        except ValueError:
            raise DataError(f"line {lineno}: label {cols[2]!r} is not -1 or +1") from None
        pairs.append(FragmentPair(cols[0], cols[1], label, cols[3] if len(cols) == 4 and cols[3] else None))
    return pairs


def save_pairs(pairs: Sequence[FragmentPair], path: str | Path) -> None:
    Path(path).write_text(format_pairs(pairs), encoding="utf-8")


def load_pairs(path: str | Path) -> list[FragmentPair]:
    return parse_pairs(Path(path).read_text(encoding="utf-8"))


def check_pairs(pairs: Sequence[FragmentPair], store: FragmentStore) -> None:
    for p in pairs:
        for fid in (p.id1, p.id2):
            if fid not in store:
                raise UnknownFragment(f"pair references unknown fragment {fid!r}")


def split_pairs(pairs: Sequence[FragmentPair], ratios: Sequence[float] = (8, 1, 1), seed: int = 0):
    """Seeded shuffle, then contiguous train/valid/test cuts by ``ratios``."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ValueError("ratios must be three non-negative numbers with a positive sum")
    order = np.random.default_rng(seed).permutation(len(pairs))
    shuffled = [pairs[i] for i in order]
    total = float(sum(ratios))
    n = len(pairs)
    a = int(round(n * ratios[0] / total))
    b = int(round(n * (ratios[0] + ratios[1]) / total))
    return shuffled[:a], shuffled[a:b], shuffled[b:]


def type_breakdown(pairs: Sequence[FragmentPair]) -> dict[str, tuple[int, float]]:
    if any(p.clone_type is None for p in pairs):
        raise MissingTypeTags("type breakdown needs a clone-type tag on every pair")
    counts = Counter(p.clone_type for p in pairs)
    total = len(pairs)
    return {t: (counts.get(t, 0), 100.0 * counts.get(t, 0) / total if total else 0.0) for t in CLONE_TYPES}


def tagged_fragments(pairs: Sequence[FragmentPair]) -> set[str]:
    """Ids of fragments that take part in at least one labeled pair."""
    return {fid for p in pairs for fid in (p.id1, p.id2)}


def filter_to_tagged(store: FragmentStore, pairs: Sequence[FragmentPair]) -> FragmentStore:
    return store.restrict(tagged_fragments(pairs) & set(store.ids()))
