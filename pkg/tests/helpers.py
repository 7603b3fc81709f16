"""Small graphs and parameter fixtures shared by the model tests."""

from __future__ import annotations

import numpy as np

from flowclone import fa_ast, ggnn
from flowclone.fa_ast import Edge, FlowGraph
from flowclone.java import AstNode, AstTree, NodeKind
from flowclone.vocab import build_vocab

T = NodeKind.TERMINAL


def _tree(spec) -> AstTree:
    nodes = []
    for i, (kind, token, children) in enumerate(spec):
        nodes.append(AstNode(i, kind, token, children, (1, i) if kind is T else None))
    return AstTree("tiny", nodes)


def ten_node_graph() -> FlowGraph:
    """Block with a declaration and an if/else: every edge family, 10 nodes."""
    return fa_ast.build(_tree([
        (NodeKind.BLOCK_STATEMENT, None, [1, 3]),
        (NodeKind.VARIABLE_DECLARATOR, None, [2]),
        (T, "a", []),
        (NodeKind.IF_STATEMENT, None, [4, 6, 8]),
        (NodeKind.IF_CONDITION, None, [5]),
        (T, "a", []),
        (NodeKind.STATEMENT_EXPRESSION, None, [7]),
        (T, "a", []),
        (NodeKind.ELSE_STATEMENT, None, [9]),
        (T, "b", []),
    ]))


def six_node_graph() -> FlowGraph:
    """A while loop over a declared name."""
    return fa_ast.build(_tree([
        (NodeKind.WHILE_STATEMENT, None, [1, 3]),
        (NodeKind.WHILE_CONDITION, None, [2]),
        (T, "a", []),
        (NodeKind.BLOCK_STATEMENT, None, [4, 5]),
        (T, "b", []),
        (T, "a", []),
    ]))


def permute_graph(g: FlowGraph, perm: np.ndarray) -> FlowGraph:
    """Renumber node ``i`` as ``perm[i]``."""
    n = g.num_nodes
    inv = np.empty(n, dtype=int)
    inv[perm] = np.arange(n)
    labels = [g.node_labels[inv[k]] for k in range(n)]
    positions = [g.positions[inv[k]] for k in range(n)] if g.positions else []
    edges = sorted(Edge(int(perm[e.src]), int(perm[e.dst]), e.etype) for e in g.edges)
    return FlowGraph(g.fragment_id, n, labels, edges, positions)


def unit_scale_params(graphs, d: int, gru_input: int, seed: int = 0):
    """Parameters whose embeddings are drawn at unit scale.

    Larger embeddings keep ReLU pre-activations away from zero, so central
    differences at eps=1e-4 do not straddle the kink.
    """
    vocab = build_vocab(graphs)
    params = ggnn.init_params(vocab.size, d, gru_input, seed)
    rng = np.random.default_rng(seed + 100)
    params.params["node_table"][...] = rng.normal(size=params["node_table"].shape)
    params.params["edge_table"][...] = rng.normal(size=params["edge_table"].shape)
    for name in params.names():
        if name.endswith(".b") or name.endswith(".b0") or name.endswith(".b1"):
            params.params[name][...] = 0.1 * rng.normal(size=params[name].shape)
    return vocab, params
