"""Gated graph neural network embedding of a single flow graph.

A message for edge ``src -> dst`` is ``MLP([h_dst | h_src | e_type])``
(one ReLU hidden layer of width d); a node sums the messages on its
in-edges and feeds the sum to a GRU whose weights are shared across
steps.  The first MLP layer is applied as three per-node / per-type
projections and the second layer after aggregation, which is the same
function as running the MLP per edge and summing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .batch import GraphBatch, make_batch
from .errors import ShapeMismatch
from .fa_ast import FlowGraph
from .nn import (
    GruSpec,
    MlpSpec,
    ParamStore,
    dense,
    gated_readout_backward,
    gated_readout_forward,
    gru_backward,
    gru_forward,
    gru_init,
    mlp_init,
    readout_init,
)
from .vocab import EmbeddingTables, Vocabulary, init_tables

MSG = "msg"
GRU = "gru"
READOUT = "readout"


@dataclass(frozen=True)
class GgnnConfig:
    d: int = 100
    T: int = 4

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("hidden size d must be >= 1")
        if self.T < 1:
            raise ValueError("propagation steps T must be >= 1")


def message_spec(d: int) -> MlpSpec:
    return MlpSpec(3 * d, d, hidden=(d,))


def init_params(vocab_size: int, d: int, gru_input: int, seed: int) -> ParamStore:
    """Fresh parameters for either model; ``gru_input`` is d (GGNN) or 2d (GMN)."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    init_tables(store, vocab_size, d, rng)
    mlp_init(store, MSG, message_spec(d), rng)
    gru_init(store, GRU, GruSpec(gru_input, d), rng)
    readout_init(store, READOUT, d, rng)
    return store


def message_forward(store: ParamStore, H: np.ndarray, batch: GraphBatch):
    """Summed incoming messages per node (zero for nodes without in-edges)."""
    W0, b0 = store[f"{MSG}.W0"], store[f"{MSG}.b0"]
    W1, b1 = store[f"{MSG}.W1"], store[f"{MSG}.b1"]
    d = H.shape[1]
    if W0.shape[1] != 3 * d:
        raise ShapeMismatch(f"message MLP expects 3*{W0.shape[1] // 3} inputs, states have d={d}")
    proj_dst = dense(H, W0[:, :d])
    proj_src = dense(H, W0[:, d : 2 * d])
    proj_type = dense(store["edge_table"], W0[:, 2 * d :])
    z = proj_dst[batch.dst] + proj_src[batch.src] + proj_type[batch.etype] + b0
    mask = z > 0
    hidden_sum = np.asarray(batch.by_dst @ (z * mask))
    m = dense(hidden_sum, W1) + batch.in_degree[:, None] * b1
    return m, (H, mask, hidden_sum)


def message_backward(store: ParamStore, batch: GraphBatch, cache, dm: np.ndarray) -> np.ndarray:
    H, mask, hidden_sum = cache
    d = H.shape[1]
    W0, W1 = store[f"{MSG}.W0"], store[f"{MSG}.W1"]
    grads = store.grads
    grads[f"{MSG}.W1"] += dm.T @ hidden_sum
    grads[f"{MSG}.b1"] += batch.in_degree @ dm
    dz = (dm @ W1)[batch.dst] * mask
    grads[f"{MSG}.b0"] += dz.sum(axis=0)
    d_dst = np.asarray(batch.by_dst @ dz)
    d_src = np.asarray(batch.by_src @ dz)
    d_type = np.asarray(batch.by_type @ dz)
    gW0 = grads[f"{MSG}.W0"]
    gW0[:, :d] += d_dst.T @ H
    gW0[:, d : 2 * d] += d_src.T @ H
    gW0[:, 2 * d :] += d_type.T @ store["edge_table"]
    grads["edge_table"] += d_type @ W0[:, 2 * d :]
    return d_dst @ W0[:, :d] + d_src @ W0[:, d : 2 * d]


def initial_states(store: ParamStore, batch: GraphBatch) -> np.ndarray:
    return store["node_table"][batch.label_ids]


def node_table_backward(store: ParamStore, batch: GraphBatch, dH0: np.ndarray) -> None:
    np.add.at(store.grads["node_table"], batch.label_ids, dH0)


def forward(store: ParamStore, batch: GraphBatch, config: GgnnConfig):
    """Graph vectors (one row per graph in the batch) and a cache for ``backward``."""
    H = initial_states(store, batch)
    steps = []
    for _ in range(config.T):
        m, mcache = message_forward(store, H, batch)
        H, gcache = gru_forward(store, GRU, H, m)
        steps.append((mcache, gcache))
    out, rcache = gated_readout_forward(store, READOUT, H, batch.readout)
    return out, (steps, rcache, H)


def backward(store: ParamStore, batch: GraphBatch, cache, dout: np.ndarray) -> None:
    steps, rcache, _ = cache
    dH = gated_readout_backward(store, READOUT, rcache, dout)
    for mcache, gcache in reversed(steps):
        dH, dm = gru_backward(store, GRU, gcache, dH)
        dH = dH + message_backward(store, batch, mcache, dm)
    node_table_backward(store, batch, dH)


# -- single-graph operations -------------------------------------------------

def propagate_once(graph: FlowGraph, states: np.ndarray, tables: EmbeddingTables, params: ParamStore) -> np.ndarray:
    """One message-passing round; rows of ``states`` follow the graph's numbering."""
    if states.shape[0] != graph.num_nodes:
        raise ShapeMismatch(f"{states.shape[0]} state rows for {graph.num_nodes} nodes")
    params = with_tables(params, tables)
    # labels are not read here, so an empty vocabulary suffices
    batch = make_batch([graph], Vocabulary([]))
    H = states[batch.orders[0]]
    m, _ = message_forward(params, H, batch)
    H_new, _ = gru_forward(params, GRU, H, m)
    return batch.to_original(0, H_new)


def embed_graph(graph: FlowGraph, config: GgnnConfig, vocab: Vocabulary, params: ParamStore) -> np.ndarray:
    out, _ = forward(params, make_batch([graph], vocab), config)
    return out[0]


def embed_graphs(graphs: list[FlowGraph], config: GgnnConfig, vocab: Vocabulary, params: ParamStore) -> np.ndarray:
    out, _ = forward(params, make_batch(graphs, vocab), config)
    return out


def with_tables(params: ParamStore, tables: EmbeddingTables) -> ParamStore:
    """``params`` with its embedding tables swapped for ``tables`` (shallow)."""
    if tables.node_table is params["node_table"] and tables.edge_table is params["edge_table"]:
        return params
    view = ParamStore()
    view.params = dict(params.params, node_table=tables.node_table, edge_table=tables.edge_table)
    view.grads = params.grads
    return view
