"""Disjoint-union batching of flow graphs.

Each graph is renumbered into its canonical node order and its edges are
sorted by ``(dst, src, type)``, so every floating-point reduction inside
the models runs in an order that depends only on graph structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import EmptyGraph
from .fa_ast import NUM_EDGE_TYPES, FlowGraph, canonical_order
from .nn import segment_matrix
from .vocab import Vocabulary


@dataclass
class GraphBatch:
    num_graphs: int
    label_ids: np.ndarray      # (N,)
    src: np.ndarray            # (E,)
    dst: np.ndarray            # (E,)
    etype: np.ndarray          # (E,)
    offsets: np.ndarray        # (G+1,) node offsets per graph
    orders: list[np.ndarray]   # per graph: canonical position -> original node id
    by_dst: sparse.csr_matrix  # N x E, sums edge rows into their destination
    by_src: sparse.csr_matrix  # N x E
    by_type: sparse.csr_matrix  # NUM_EDGE_TYPES x E
    readout: sparse.csr_matrix  # G x N
    in_degree: np.ndarray      # (N,)

    @property
    def num_nodes(self) -> int:
        return len(self.label_ids)

    def graph_slice(self, g: int) -> slice:
        return slice(int(self.offsets[g]), int(self.offsets[g + 1]))

    def to_original(self, g: int, rows: np.ndarray) -> np.ndarray:
        """Reorder per-node rows of graph ``g`` back into its original numbering."""
        out = np.empty_like(rows)
        out[self.orders[g]] = rows
        return out


def make_batch(graphs: list[FlowGraph], vocab: Vocabulary) -> GraphBatch:
    labels, srcs, dsts, types, orders = [], [], [], [], []
    offsets = [0]
    for g in graphs:
        if g.num_nodes == 0:
            raise EmptyGraph(f"graph {g.fragment_id!r} has no nodes")
        order = np.asarray(canonical_order(g), dtype=np.int64)
        pos = np.empty(g.num_nodes, dtype=np.int64)
        pos[order] = np.arange(g.num_nodes)
        orders.append(order)
        labels.append(vocab.encode_labels(g.node_labels)[order])
        if g.edges:
            e = np.array([(pos[s], pos[d], t.index) for s, d, t in g.edges], dtype=np.int64)
            e = e[np.lexsort((e[:, 2], e[:, 0], e[:, 1]))]
            srcs.append(e[:, 0] + offsets[-1])
            dsts.append(e[:, 1] + offsets[-1])
            types.append(e[:, 2])
        offsets.append(offsets[-1] + g.num_nodes)
    n = offsets[-1]
    src = np.concatenate(srcs) if srcs else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(dsts) if dsts else np.zeros(0, dtype=np.int64)
    etype = np.concatenate(types) if types else np.zeros(0, dtype=np.int64)
    node_graph = np.repeat(np.arange(len(graphs)), np.diff(offsets))
    return GraphBatch(
        num_graphs=len(graphs),
        label_ids=np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64),
        src=src,
        dst=dst,
        etype=etype,
        offsets=np.asarray(offsets, dtype=np.int64),
        orders=orders,
        by_dst=segment_matrix(dst, n),
        by_src=segment_matrix(src, n),
        by_type=segment_matrix(etype, NUM_EDGE_TYPES),
        readout=segment_matrix(node_graph, len(graphs)),
        in_degree=np.bincount(dst, minlength=n).astype(np.float64),
    )
