"""Seeded generator of small Java clone corpora.

Each functionality is a method template.  Variants apply identifier
renaming, optional statement insertion, and a for/while loop-form swap.
Every unordered pair of fragments is labeled: same functionality means a
clone, tagged by how far the two variants drifted apart.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .dataset import FragmentPair, FragmentStore
from .java import Granularity, SourceFragment

SYNTH_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Loop:
    var: str
    init: str
    cond: str
    update: str
    body: tuple[str, ...]


@dataclass(frozen=True)
class Template:
    name: str
    signature: str
    head: tuple[str, ...]
    loop: Loop
    tail: tuple[str, ...]
    # optional statements as (where, text); where is head | body | tail
    extras: tuple[tuple[str, str], ...]
    method_names: tuple[str, ...]


_LOG = ("head", 'System.out.println("enter");')

TEMPLATES = (
    Template(
        "array_sum", "int {fn}(int[] {a})",
        ("int {s} = 0;",),
        Loop("{i}", "0", "{i} < {a}.length", "{i}++", ("{s} += {a}[{i}];",)),
        ("return {s};",),
        (("head", "if ({a} == null) {{ return 0; }}"), ("tail", "System.out.println({s});"), _LOG),
        ("sum", "arraySum", "total", "sumAll", "addUp"),
    ),
    Template(
        "array_max", "int {fn}(int[] {a})",
        ("int {m} = {a}[0];",),
        Loop("{i}", "1", "{i} < {a}.length", "{i}++", ("if ({a}[{i}] > {m}) {{ {m} = {a}[{i}]; }}",)),
        ("return {m};",),
        (("tail", "System.out.println({m});"), ("body", "{c}++;"), _LOG),
        ("max", "findMax", "largest", "maxOf", "peak"),
    ),
    Template(
        "reverse_string", "String {fn}(String {t})",
        ("StringBuilder {b} = new StringBuilder();",),
        Loop("{i}", "{t}.length() - 1", "{i} >= 0", "{i}--", ("{b}.append({t}.charAt({i}));",)),
        ("return {b}.toString();",),
        (("head", "if ({t} == null) {{ return null; }}"), ("tail", "System.out.println({b});"), _LOG),
        ("reverse", "flip", "backwards", "mirror", "invert"),
    ),
    Template(
        "linear_search", "int {fn}(int[] {a}, int {k})",
        (),
        Loop("{i}", "0", "{i} < {a}.length", "{i}++", ("if ({a}[{i}] == {k}) {{ return {i}; }}",)),
        ("return -1;",),
        (("head", "if ({a} == null) {{ return -1; }}"), ("body", "System.out.println({a}[{i}]);"), _LOG),
        ("indexOf", "find", "search", "locate", "position"),
    ),
    Template(
        "factorial", "long {fn}(int {n})",
        ("long {r} = 1;",),
        Loop("{i}", "1", "{i} <= {n}", "{i}++", ("{r} = {r} * {i};",)),
        ("return {r};",),
        (("head", "if ({n} < 0) {{ return 0; }}"), ("tail", "System.out.println({r});"), _LOG),
        ("factorial", "fact", "product", "permutations", "bang"),
    ),
    Template(
        "count_even", "int {fn}(int[] {a})",
        ("int {c} = 0;",),
        Loop("{i}", "0", "{i} < {a}.length", "{i}++", ("if ({a}[{i}] % 2 == 0) {{ {c}++; }}",)),
        ("return {c};",),
        (("head", "if ({a} == null) {{ return 0; }}"), ("tail", "System.out.println({c});"), _LOG),
        ("countEven", "evens", "numEven", "evenCount", "tallyEven"),
    ),
    Template(
        "is_prime", "boolean {fn}(int {n})",
        ("if ({n} < 2) {{ return false; }}",),
        Loop("{i}", "2", "{i} * {i} <= {n}", "{i}++", ("if ({n} % {i} == 0) {{ return false; }}",)),
        ("return true;",),
        (("head", "if ({n} == 2) {{ return true; }}"), ("body", "System.out.println({i});"), _LOG),
        ("isPrime", "prime", "checkPrime", "primeTest", "noDivisor"),
    ),
    Template(
        "fibonacci", "int {fn}(int {n})",
        ("int {x} = 0;", "int {y} = 1;"),
        Loop("{i}", "0", "{i} < {n}", "{i}++", ("int {t} = {x} + {y};", "{x} = {y};", "{y} = {t};")),
        ("return {x};",),
        (("head", "if ({n} < 0) {{ return -1; }}"), ("tail", "System.out.println({x});"), _LOG),
        ("fib", "fibonacci", "nthFib", "fibo", "goldenSeq"),
    ),
)

# canonical names first; variants may pick any other entry
NAME_POOLS = {
    "a": ("a", "arr", "nums", "values", "data", "xs", "items"),
    "s": ("s", "sum", "total", "acc", "result"),
    "i": ("i", "j", "idx", "p", "pos"),
    "m": ("m", "max", "best", "top", "hi"),
    "t": ("t", "str", "text", "word", "input"),
    "b": ("sb", "out", "buf", "builder", "rev"),
    "k": ("k", "key", "target", "needle", "want"),
    "n": ("n", "num", "count", "size", "limit"),
    "r": ("r", "res", "prod", "f", "answer"),
    "c": ("c", "cnt", "tally", "hits", "even"),
    "x": ("x", "prev", "lo", "first", "u"),
    "y": ("y", "cur", "nxt", "second", "w"),
}


@dataclass(frozen=True)
class Variant:
    template: Template
    names: dict
    loop_form: str
    extras: frozenset

    def render(self) -> str:
        fill = lambda s: s.format(**self.names)
        t = self.template
        head = [fill(x) for x in t.head]
        tail = [fill(x) for x in t.tail]
        body = [fill(x) for x in t.loop.body]
        needs_counter = False
        for k in sorted(self.extras):
            where, text = t.extras[k]
            needs_counter |= "{c}" in text and not any("{c}" in s for s in t.head)
            if where == "head":
                head.insert(0, fill(text))
            elif where == "body":
                body.append(fill(text))
            else:
                # just before the final return
                tail.insert(len(tail) - 1, fill(text))
        if needs_counter:
            head.insert(0, fill("int {c} = 0;"))
        lp = t.loop
        var, init, cond, update = fill(lp.var), fill(lp.init), fill(lp.cond), fill(lp.update)
        if self.loop_form == "for":
            loop = [f"for (int {var} = {init}; {cond}; {update}) {{", *("    " + s for s in body), "}"]
        else:
            loop = [f"int {var} = {init};", f"while ({cond}) {{", *("    " + s for s in body), f"    {update};", "}"]
        lines = [*head, *loop, *tail]
        return f"{fill(t.signature)} {{\n" + "".join(f"    {s}\n" for s in lines) + "}\n"


def _names(template: Template, rng: np.random.Generator, rename: bool) -> dict:
    names = {"fn": template.method_names[0]}
    used = set()
    for role, pool in NAME_POOLS.items():
        choices = [n for n in pool if n not in used] if rename else [pool[0]]
        pick = choices[int(rng.integers(len(choices)))] if rename else pool[0]
        names[role] = pick
        used.add(pick)
    if rename:
        names["fn"] = template.method_names[int(rng.integers(len(template.method_names)))]
    return names


def clone_type(a: Variant, b: Variant) -> str:
    if a.loop_form != b.loop_form:
        return "WT3T4"
    edits = len(a.extras ^ b.extras)
    if edits == 0:
        return "T1" if a.render() == b.render() else "T2"
    return "ST3" if edits == 1 else "MT3"


def gen_variants(template: Template, count: int, rng: np.random.Generator) -> list[Variant]:
    out, seen = [], set()
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 200 * count:
            raise RuntimeError(f"could not draw {count} distinct variants of {template.name}")
        first = not out
        rename = not first and rng.random() < 0.7
        loop_form = "for" if first else ("for", "while")[int(rng.random() < 0.4)]
        extras = frozenset() if first else frozenset(k for k in range(len(template.extras)) if rng.random() < 0.3)
        v = Variant(template, _names(template, rng, rename), loop_form, extras)
        code = v.render()
        if code not in seen:
            seen.add(code)
            out.append(v)
    return out


@dataclass
class SynthCorpus:
    store: FragmentStore
    pairs: list[FragmentPair]
    manifest: dict
    functionality: dict  # fragment id -> template name


def gen_synthetic_corpus(n_functionalities: int = 6, variants_per_functionality: int = 10, seed: int = 0) -> SynthCorpus:
    if n_functionalities < 2:
        raise ValueError("need at least two functionalities")
    if n_functionalities > len(TEMPLATES):
        raise ValueError(f"only {len(TEMPLATES)} functionality templates are available")
    if variants_per_functionality < 1:
        raise ValueError("need at least one variant per functionality")
    rng = np.random.default_rng(seed)
    store = FragmentStore()
    variants: dict[str, Variant] = {}
    functionality = {}
    for template in TEMPLATES[:n_functionalities]:
        for k, v in enumerate(gen_variants(template, variants_per_functionality, rng)):
            fid = f"{template.name}_{k:02d}"
            store.add(SourceFragment(fid, v.render(), Granularity.METHOD))
            variants[fid] = v
            functionality[fid] = template.name
    pairs = []
    for a, b in itertools.combinations(store.ids(), 2):
        if functionality[a] == functionality[b]:
            pairs.append(FragmentPair(a, b, 1, clone_type(variants[a], variants[b])))
        else:
            pairs.append(FragmentPair(a, b, -1, "NonClone"))
    manifest = {
        "format": "synthetic-corpus",
        "version": SYNTH_FORMAT_VERSION,
        "seed": seed,
        "n_functionalities": n_functionalities,
        "variants_per_functionality": variants_per_functionality,
        "functionalities": [t.name for t in TEMPLATES[:n_functionalities]],
        "fragments": len(store),
        "true_pairs": sum(p.label == 1 for p in pairs),
        "false_pairs": sum(p.label == -1 for p in pairs),
    }
    return SynthCorpus(store, pairs, manifest, functionality)


def manifest_json(corpus: SynthCorpus) -> str:
    return json.dumps(corpus.manifest, indent=2, sort_keys=True) + "\n"
