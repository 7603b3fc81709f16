import json

import pytest

from flowclone import fa_ast
from flowclone.dataset import (
    CLONE_TYPES,
    FragmentPair,
    FragmentStore,
    check_pairs,
    filter_to_tagged,
    format_pairs,
    load_corpus,
    load_pairs,
    parse_pairs,
    save_pairs,
    split_pairs,
    type_breakdown,
)
from flowclone.errors import DataError, DuplicateId, EmptyCorpus, MissingTypeTags, UnknownFragment
from flowclone.java import Granularity, SourceFragment
from flowclone.synth import TEMPLATES, gen_synthetic_corpus, manifest_json

GOOD = "int twice(int x) { return 2 * x; }"
CLASS = "class A { int f() { return 1; } }"


def write_java(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "a.java").write_text(GOOD)
    (tmp_path / "sub" / "b.java").write_text(CLASS)
    (tmp_path / "broken.java").write_text("int f( { return; }")
    return tmp_path


def test_directory_corpus_skips_broken_files(tmp_path):
    store = load_corpus(write_java(tmp_path))
    assert store.ids() == ["a", "sub/b"]
    assert store.fragments["a"].granularity is Granularity.METHOD
    assert store.fragments["sub/b"].granularity is Granularity.CLASS
    report = [json.loads(line) for line in store.skip_report().splitlines()]
    assert [r["id"] for r in report] == ["broken"] and report[0]["error"] == "ParseError"


def test_forced_granularity(tmp_path):
    store = load_corpus(write_java(tmp_path), granularity="method")
    assert store.ids() == ["a"] and len(store.skipped) == 2


def test_single_file_and_records_round_trip(tmp_path):
    store = load_corpus(write_java(tmp_path) / "a.java")
    assert store.ids() == ["a"]
    (tmp_path / "frags.jsonl").write_text(store.to_records())
    back = load_corpus(tmp_path / "frags.jsonl")
    assert back.fragments == store.fragments
    assert back.to_records() == store.to_records()


def test_empty_and_missing_corpora(tmp_path):
    (tmp_path / "x.java").write_text("not java at all")
    with pytest.raises(EmptyCorpus):
        load_corpus(tmp_path)
    with pytest.raises(FileNotFoundError):
        load_corpus(tmp_path / "nope")
    with pytest.raises(DataError):
        load_corpus(tmp_path, granularity="statement")


def test_duplicate_ids_rejected(tmp_path):
    (tmp_path / "d.jsonl").write_text(json.dumps({"id": "x", "code": GOOD}) + "\n" + json.dumps({"id": "x", "code": GOOD}) + "\n")
    with pytest.raises(DuplicateId):
        load_corpus(tmp_path / "d.jsonl")


def test_graph_cache_shares_identical_code():
    store = FragmentStore()
    store.add(SourceFragment("one", GOOD))
    store.add(SourceFragment("two", GOOD))
    g1, g2 = store.graph("one"), store.graph("two")
    assert g1.fragment_id == "one" and g2.fragment_id == "two"
    assert g1.edges == g2.edges and len(store._graphs) == 1
    assert fa_ast.check_invariants(g1) == []
    with pytest.raises(UnknownFragment):
        store.graph("three")


def test_pair_validation():
    with pytest.raises(DataError):
        FragmentPair("a", "a", 1)
    with pytest.raises(DataError):
        FragmentPair("a", "b", 0)
    with pytest.raises(DataError):
        FragmentPair("a", "b", 1, "T9")


def test_pairs_file_round_trip(tmp_path):
    pairs = [FragmentPair("a", "b", 1, "T2"), FragmentPair("a", "c", -1)]
    save_pairs(pairs, tmp_path / "p.tsv")
    assert load_pairs(tmp_path / "p.tsv") == pairs
    assert format_pairs(pairs).splitlines()[0].startswith("#")


@pytest.mark.parametrize("text", ["a\tb\n", "a\tb\tyes\n", "a\tb\t2\n"])
def test_malformed_pair_lines(text):
    with pytest.raises(DataError):
        parse_pairs(text)


def test_check_pairs_reports_unknown_fragment():
    store = FragmentStore()
    store.add(SourceFragment("a", GOOD))
    with pytest.raises(UnknownFragment):
        check_pairs([FragmentPair("a", "b", 1)], store)


def test_split_is_seeded_and_exhaustive():
    pairs = [FragmentPair(f"x{i}", f"y{i}", 1 if i % 3 else -1) for i in range(50)]
    tr, va, te = split_pairs(pairs, (8, 1, 1), seed=3)
    assert (len(tr), len(va), len(te)) == (40, 5, 5)
    assert sorted(tr + va + te, key=lambda p: p.id1) == sorted(pairs, key=lambda p: p.id1)
    assert split_pairs(pairs, (8, 1, 1), seed=3) == (tr, va, te)
    assert split_pairs(pairs, (8, 1, 1), seed=4) != (tr, va, te)
    with pytest.raises(ValueError):
        split_pairs(pairs, (1, 1))


def test_type_breakdown():
    pairs = [FragmentPair("a", "b", 1, "T1"), FragmentPair("a", "c", -1, "NonClone"),
             FragmentPair("b", "c", -1, "NonClone"), FragmentPair("c", "d", 1, "MT3")]
    table = type_breakdown(pairs)
    assert set(table) == set(CLONE_TYPES)
    assert table["NonClone"] == (2, 50.0) and table["ST3"] == (0, 0.0)
    with pytest.raises(MissingTypeTags):
        type_breakdown([FragmentPair("a", "b", 1)])


def test_filter_to_tagged():
    store = FragmentStore()
    for fid in "abc":
        store.add(SourceFragment(fid, GOOD))
    assert filter_to_tagged(store, [FragmentPair("a", "c", 1)]).ids() == ["a", "c"]


def test_synthetic_corpus_counts():
    c = gen_synthetic_corpus(2, 3, seed=0)
    assert len(c.store) == 6
    assert sum(p.label == 1 for p in c.pairs) == 6 and sum(p.label == -1 for p in c.pairs) == 9
    assert c.manifest["true_pairs"] == 6 and c.manifest["false_pairs"] == 9
    assert json.loads(manifest_json(c))["seed"] == 0


def test_synthetic_corpus_is_seeded():
    a, b = gen_synthetic_corpus(3, 4, seed=5), gen_synthetic_corpus(3, 4, seed=5)
    assert a.store.to_records() == b.store.to_records() and a.pairs == b.pairs
    assert gen_synthetic_corpus(3, 4, seed=6).store.to_records() != a.store.to_records()


def test_synthetic_fragments_parse_with_valid_graphs():
    c = gen_synthetic_corpus(len(TEMPLATES), 4, seed=1)
    for fid in c.store.ids():
        g = c.store.graph(fid)
        assert fa_ast.check_invariants(g) == []
        counts = fa_ast.control_flow_counts(g)
        assert counts["ForStatement"] + counts["WhileStatement"] >= 1
    labels = {(p.id1, p.id2): p for p in c.pairs}
    for (x, y), p in labels.items():
        assert (p.label == 1) == (c.functionality[x] == c.functionality[y])
        assert (p.clone_type == "NonClone") == (p.label == -1)


@pytest.mark.parametrize("args", [(1, 3), (len(TEMPLATES) + 1, 3), (2, 0)])
def test_synthetic_corpus_argument_checks(args):
    with pytest.raises(ValueError):
        gen_synthetic_corpus(*args)
