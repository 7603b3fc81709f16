"""Flow-augmented AST: typed syntactic, data-flow and control-flow edges."""

from __future__ import annotations

import enum
import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import DataError, MalformedNode
from .java.tree import AstTree, NodeKind

# Bump when any edge rule changes; graph caches key on it.
RULE_VERSION = 1
GRAPH_FORMAT_VERSION = 1


class EdgeType(str, enum.Enum):
    CHILD = "Child"
    PARENT = "Parent"
    NEXT_SIB = "NextSib"
    NEXT_TOKEN = "NextToken"
    NEXT_USE = "NextUse"
    COND_TRUE = "CondTrue"
    COND_FALSE = "CondFalse"
    WHILE_EXEC = "WhileExec"
    WHILE_NEXT = "WhileNext"
    FOR_EXEC = "ForExec"
    FOR_NEXT = "ForNext"
    NEXT_STMT = "NextStmt"
    PREV_SIB = "PrevSib"
    PREV_TOKEN = "PrevToken"
    PREV_USE = "PrevUse"
    COND_TRUE_BACK = "CondTrueBack"
    COND_FALSE_BACK = "CondFalseBack"
    NEXT_STMT_BACK = "NextStmtBack"

    @property
    def index(self) -> int:
        return _EDGE_INDEX[self]


_EDGE_INDEX = {e: i for i, e in enumerate(EdgeType)}
NUM_EDGE_TYPES = len(_EDGE_INDEX)

# forward kind -> the kind of its added reverse edge
BACKWARD = {
    EdgeType.NEXT_SIB: EdgeType.PREV_SIB,
    EdgeType.NEXT_TOKEN: EdgeType.PREV_TOKEN,
    EdgeType.NEXT_USE: EdgeType.PREV_USE,
    EdgeType.COND_TRUE: EdgeType.COND_TRUE_BACK,
    EdgeType.COND_FALSE: EdgeType.COND_FALSE_BACK,
    EdgeType.NEXT_STMT: EdgeType.NEXT_STMT_BACK,
}
# pairs that already run both ways without added edges
SELF_PAIRED = {
    EdgeType.CHILD: EdgeType.PARENT,
    EdgeType.PARENT: EdgeType.CHILD,
    EdgeType.WHILE_EXEC: EdgeType.WHILE_NEXT,
    EdgeType.WHILE_NEXT: EdgeType.WHILE_EXEC,
    EdgeType.FOR_EXEC: EdgeType.FOR_NEXT,
    EdgeType.FOR_NEXT: EdgeType.FOR_EXEC,
}
CONTROL_FLOW_KINDS = (
    EdgeType.COND_TRUE, EdgeType.COND_FALSE, EdgeType.WHILE_EXEC,
    EdgeType.WHILE_NEXT, EdgeType.FOR_EXEC, EdgeType.FOR_NEXT,
)


class Edge(NamedTuple):
    src: int
    dst: int
    etype: EdgeType


@dataclass
class FlowGraph:
    fragment_id: str
    num_nodes: int
    node_labels: list[str]
    edges: list[Edge]
    # (line, column) for terminal nodes, None for nonterminals
    positions: list[tuple[int, int] | None] = field(default_factory=list)

    def is_terminal(self, node: int) -> bool:
        return bool(self.positions) and self.positions[node] is not None

    def edges_of(self, etype: EdgeType) -> list[Edge]:
        return [e for e in self.edges if e.etype is etype]

    def histogram(self) -> Counter:
        return Counter(e.etype.value for e in self.edges)


_JAVA_KEYWORDS = frozenset(
    """abstract assert boolean break byte case catch char class const continue default do double
    else enum extends final finally float for goto if implements import instanceof int interface
    long native new package private protected public return short static strictfp super switch
    synchronized this throw throws transient try void volatile while true false null""".split()
)
_IDENT_RE = re.compile(r"^[A-Za-z_$][A-Za-z0-9_$]*$")
_DECLARING_KINDS = (
    NodeKind.VARIABLE_DECLARATOR, NodeKind.FORMAL_PARAMETER,
    NodeKind.CATCH_PARAMETER, NodeKind.TRY_RESOURCE,
)


def is_identifier(token: str) -> bool:
    return bool(_IDENT_RE.match(token)) and token not in _JAVA_KEYWORDS


def _graph_from_tree(tree: AstTree, edges: list[Edge]) -> FlowGraph:
    labels = [n.token if n.is_terminal else n.kind.value for n in tree.nodes]
    positions = [n.position if n.is_terminal else None for n in tree.nodes]
    return FlowGraph(tree.fragment_id, len(tree.nodes), labels, edges, positions)


def add_ast_edges(tree: AstTree) -> FlowGraph:
    edges = []
    for node in tree.nodes:
        for c in node.children:
            edges.append(Edge(node.node_id, c, EdgeType.CHILD))
            edges.append(Edge(c, node.node_id, EdgeType.PARENT))
    return _graph_from_tree(tree, edges)


def add_sibling_edges(tree: AstTree) -> list[Edge]:
    return [
        Edge(a, b, EdgeType.NEXT_SIB)
        for node in tree.nodes
        for a, b in zip(node.children, node.children[1:])
    ]


def add_token_edges(tree: AstTree) -> list[Edge]:
    terms = [n.node_id for n in tree.nodes if n.is_terminal]
    return [Edge(a, b, EdgeType.NEXT_TOKEN) for a, b in zip(terms, terms[1:])]


def declared_names(tree: AstTree) -> set[str]:
    """Names of locals, parameters and fields declared inside the fragment."""
    names = set()
    for node in tree.nodes:
        if node.kind in _DECLARING_KINDS:
            for c in node.children:
                child = tree.nodes[c]
                if child.is_terminal and is_identifier(child.token):
                    names.add(child.token)
    return names


def add_next_use_edges(tree: AstTree) -> list[Edge]:
    # lexical: no scoping, shadowing or aliasing
    names = declared_names(tree)
    last: dict[str, int] = {}
    edges = []
    for node in tree.nodes:
        if node.is_terminal and node.token in names:
            prev = last.get(node.token)
            if prev is not None:
                edges.append(Edge(prev, node.node_id, EdgeType.NEXT_USE))
            last[node.token] = node.node_id
    return edges


def add_control_flow_edges(tree: AstTree) -> list[Edge]:
    edges = []
    for node in tree.nodes:
        ch = node.children
        if node.kind is NodeKind.IF_STATEMENT:
            if len(ch) not in (2, 3):
                raise MalformedNode(f"IfStatement {node.node_id} has {len(ch)} children")
            edges.append(Edge(ch[0], ch[1], EdgeType.COND_TRUE))
            if len(ch) == 3:
                edges.append(Edge(ch[0], ch[2], EdgeType.COND_FALSE))
        elif node.kind in (NodeKind.WHILE_STATEMENT, NodeKind.FOR_STATEMENT):
            if len(ch) != 2:
                raise MalformedNode(f"{node.kind.value} {node.node_id} has {len(ch)} children")
            is_while = node.kind is NodeKind.WHILE_STATEMENT
            edges.append(Edge(ch[0], ch[1], EdgeType.WHILE_EXEC if is_while else EdgeType.FOR_EXEC))
            edges.append(Edge(ch[1], ch[0], EdgeType.WHILE_NEXT if is_while else EdgeType.FOR_NEXT))
        elif node.kind is NodeKind.BLOCK_STATEMENT:
            stmts = [c for c in ch if not tree.nodes[c].is_terminal]
            edges.extend(Edge(a, b, EdgeType.NEXT_STMT) for a, b in zip(stmts, stmts[1:]))
    return edges


def add_backward_edges(graph: FlowGraph) -> FlowGraph:
    extra = [Edge(e.dst, e.src, BACKWARD[e.etype]) for e in graph.edges if e.etype in BACKWARD]
    return FlowGraph(graph.fragment_id, graph.num_nodes, list(graph.node_labels),
                     graph.edges + extra, list(graph.positions))


def _sorted_unique(edges: Iterable[Edge]) -> list[Edge]:
    return sorted(set(edges), key=lambda e: (e.src, e.dst, e.etype.index))


def build(tree: AstTree) -> FlowGraph:
    """AST edges plus sibling, token, next-use and control-flow edges, with backward edges."""
    graph = add_ast_edges(tree)
    graph.edges += add_sibling_edges(tree)
    graph.edges += add_token_edges(tree)
    graph.edges += add_next_use_edges(tree)
    graph.edges += add_control_flow_edges(tree)
    graph = add_backward_edges(graph)
    graph.edges = _sorted_unique(graph.edges)
    return graph


def check_invariants(graph: FlowGraph) -> list[str]:
    """Return a description of every violated FlowGraph invariant (empty if valid)."""
    problems = []
    triples = [(e.src, e.dst, e.etype) for e in graph.edges]
    present = set(triples)
    if len(present) != len(triples):
        problems.append("duplicate edges")
    for s, d, t in triples:
        if s == d:
            problems.append(f"self-loop at {s} ({t.value})")
        if not (0 <= s < graph.num_nodes and 0 <= d < graph.num_nodes):
            problems.append(f"edge {s}->{d} out of range")
        partner = SELF_PAIRED.get(t) or BACKWARD.get(t)
        if partner is not None and (d, s, partner) not in present:
            problems.append(f"{t.value} {s}->{d} lacks reverse {partner.value}")
    counts = Counter(t for _, _, t in triples)
    for fwd, back in BACKWARD.items():
        if counts[fwd] != counts[back]:
            problems.append(f"{fwd.value}={counts[fwd]} but {back.value}={counts[back]}")
    token_edges = [(s, d) for s, d, t in triples if t is EdgeType.NEXT_TOKEN]
    if graph.positions:
        terms = [i for i, p in enumerate(graph.positions) if p is not None]
        if not _is_simple_path(token_edges, terms):
            problems.append("NextToken edges do not form a simple path over the terminals")
    return problems


def _is_simple_path(edges: list[tuple[int, int]], nodes: list[int]) -> bool:
    if len(nodes) <= 1:
        return not edges
    if len(edges) != len(nodes) - 1:
        return False
    succ = dict(edges)
    if len(succ) != len(edges):
        return False
    heads = set(nodes) - set(succ.values())
    if len(heads) != 1:
        return False
    cur, seen = heads.pop(), set()
    while cur in succ:
        seen.add(cur)
        cur = succ[cur]
        if cur in seen:
            return False
    seen.add(cur)
    return seen == set(nodes)


def canonical_order(graph: FlowGraph) -> list[int]:
    """Pre-order of the underlying AST recovered from Child and NextSib edges.

    The result is independent of how the input nodes were numbered, which
    lets the models fix every floating-point summation order.  Graphs
    without a recoverable tree fall back to the identity order.
    """
    n = graph.num_nodes
    identity = list(range(n))
    children: dict[int, set[int]] = defaultdict(set)
    has_parent = [False] * n
    for e in graph.edges:
        if e.etype is EdgeType.CHILD:
            children[e.src].add(e.dst)
            if has_parent[e.dst]:
                return identity
            has_parent[e.dst] = True
    roots = [i for i in range(n) if not has_parent[i]]
    if len(roots) != 1:
        return identity
    next_sib: dict[int, int] = {}
    for e in graph.edges:
        if e.etype is EdgeType.NEXT_SIB:
            next_sib[e.src] = e.dst
    order: list[int] = []
    stack = [roots[0]]
    while stack:
        node = stack.pop()
        order.append(node)
        kids = children.get(node)
        if not kids:
            continue
        followers = {next_sib[o] for o in kids if o in next_sib}
        heads = [k for k in kids if k not in followers]
        if len(heads) != 1:
            return identity
        seq = [heads[0]]
        while seq[-1] in next_sib and next_sib[seq[-1]] in kids:
            seq.append(next_sib[seq[-1]])
        if len(seq) != len(kids):
            return identity
        stack.extend(reversed(seq))
    return order if len(order) == n else identity


def control_flow_counts(graph: FlowGraph) -> dict[str, int]:
    kinds = ("IfStatement", "WhileStatement", "ForStatement", "BlockStatement", "DoStatement", "SwitchStatement")
    counts = dict.fromkeys(kinds, 0)
    for i, label in enumerate(graph.node_labels):
        if not graph.is_terminal(i) and label in counts:
            counts[label] += 1
    return counts


# -- interchange ------------------------------------------------------------

def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


def to_dot(graph: FlowGraph) -> str:
    lines = [f'digraph "{_dot_escape(graph.fragment_id)}" {{']
    for i, label in enumerate(graph.node_labels):
        shape = "box" if graph.is_terminal(i) else "ellipse"
        lines.append(f'  n{i} [label="{_dot_escape(label)}", shape={shape}];')
    for e in graph.edges:
        lines.append(f'  n{e.src} -> n{e.dst} [label="{e.etype.value}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json_record(graph: FlowGraph) -> dict:
    return {
        "version": GRAPH_FORMAT_VERSION,
        "fragment_id": graph.fragment_id,
        "num_nodes": graph.num_nodes,
        "labels": list(graph.node_labels),
        "edges": [[e.src, e.dst, e.etype.value] for e in graph.edges],
        "positions": [list(p) if p is not None else None for p in graph.positions],
    }


def from_json_record(record: dict) -> FlowGraph:
    try:
        edges = [Edge(int(s), int(d), EdgeType(t)) for s, d, t in record["edges"]]
        positions = [tuple(p) if p is not None else None for p in record.get("positions") or []]
        graph = FlowGraph(str(record["fragment_id"]), int(record["num_nodes"]),
                          [str(x) for x in record["labels"]], edges, positions)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed graph record: {exc}") from None
    if len(graph.node_labels) != graph.num_nodes:
        raise DataError("graph record: labels length differs from num_nodes")
    return graph


def export_graph(graph: FlowGraph, fmt: str = "json") -> str:
    fmt = fmt.lower()
    if fmt == "dot":
        return to_dot(graph)
    if fmt in ("json", "jsongraph"):
        return json.dumps(to_json_record(graph), sort_keys=True) + "\n"
    raise ValueError(f"unknown graph format {fmt!r}")


def import_graph(text: str) -> FlowGraph:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"graph record is not JSON: {exc}") from None
    return from_json_record(record)
