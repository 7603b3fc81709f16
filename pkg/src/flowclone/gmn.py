"""Graph matching network over a pair of flow graphs.

Within-graph messages are exactly the GGNN ones.  In addition, every node
attends over all nodes of the *other* graph with softmax-normalized dot
products and receives the matching vector
``sum_j a_ji (h_i - h_j) = h_i - sum_j a_ji h_j``.  The GRU input is the
concatenation ``[sum of messages | matching vector]``.  All weights are
shared between the two sides.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import ggnn
from .batch import GraphBatch, make_batch
from .errors import EmptyGraph, ShapeMismatch
from .fa_ast import FlowGraph
from .ggnn import GRU, READOUT, message_backward, message_forward
from .nn import ParamStore, gated_readout_backward, gated_readout_forward, gru_backward, gru_forward, softmax
from .vocab import EmbeddingTables, Vocabulary


@dataclass(frozen=True)
class GmnConfig:
    d: int = 100
    T: int = 4
    kernel: str = "dot"
    # +1: matching vectors h_i - h_j; -1: h_j - h_i, for ablation
    match_sign: float = 1.0
    keep_history: bool = False
    # replace matching vectors by zeros (ablation / equivalence checks)
    zero_match: bool = False

    def __post_init__(self) -> None:
        if self.d < 1 or self.T < 1:
            raise ValueError("d and T must be >= 1")
        if self.kernel != "dot":
            raise ValueError(f"unsupported similarity kernel {self.kernel!r}")
        if self.match_sign not in (1.0, -1.0):
            raise ValueError("match_sign must be +1 or -1")


@dataclass
class AttentionMatrix:
    """``first[i, j]`` is how much node i of graph 1 attends to node j of graph 2;
    ``second[j, i]`` the reverse direction.  Rows are distributions."""

    first: np.ndarray
    second: np.ndarray


@dataclass
class PairResult:
    h1: np.ndarray
    h2: np.ndarray
    attention: list[AttentionMatrix] = field(default_factory=list)

    @property
    def final_attention(self) -> AttentionMatrix:
        return self.attention[-1]


def cross_attention(h1: np.ndarray, h2: np.ndarray, sign: float = 1.0, counter: Counter | None = None):
    """Matching vectors for both sides plus the attention matrices.

    Each similarity score is computed once and shared by both directions.
    """
    if h1.shape[0] == 0 or h2.shape[0] == 0:
        raise EmptyGraph("cross attention needs two non-empty graphs")
    if h1.shape[1] != h2.shape[1]:
        raise ShapeMismatch(f"state widths differ: {h1.shape[1]} vs {h2.shape[1]}")
    scores = h1 @ h2.T
    a12 = softmax(scores, axis=1)
    a21 = softmax(scores.T, axis=1)
    if counter is not None:
        counter["scores"] += scores.size
        counter["first"] += a12.size
        counter["second"] += a21.size
    mu1 = sign * (h1 - a12 @ h2)
    mu2 = sign * (h2 - a21 @ h1)
    return mu1, mu2, AttentionMatrix(a12, a21)


def cross_attention_backward(h1, h2, att: AttentionMatrix, dmu1, dmu2, sign: float = 1.0):
    g1, g2 = sign * dmu1, sign * dmu2
    a12, a21 = att.first, att.second
    dh1 = g1 - a21.T @ g2
    dh2 = g2 - a12.T @ g1
    da12 = -(g1 @ h2.T)
    da21 = -(g2 @ h1.T)
    ds = a12 * (da12 - np.sum(da12 * a12, axis=1, keepdims=True))
    ds += (a21 * (da21 - np.sum(da21 * a21, axis=1, keepdims=True))).T
    dh1 += ds @ h2
    dh2 += ds.T @ h1
    return dh1, dh2


def _pair_slices(batch: GraphBatch, p: int) -> tuple[slice, slice]:
    return batch.graph_slice(2 * p), batch.graph_slice(2 * p + 1)


def _match(H: np.ndarray, batch: GraphBatch, config: GmnConfig, counter: Counter | None):
    mu = np.zeros_like(H)
    atts = []
    for p in range(batch.num_graphs // 2):
        s1, s2 = _pair_slices(batch, p)
        mu1, mu2, att = cross_attention(H[s1], H[s2], config.match_sign, counter)
        if not config.zero_match:
            mu[s1] = mu1
            mu[s2] = mu2
        atts.append(att)
    return mu, atts


def forward(store: ParamStore, batch: GraphBatch, config: GmnConfig, counter: Counter | None = None):
    """Graph vectors for a batch laid out as ``[a0, b0, a1, b1, ...]``."""
    if batch.num_graphs % 2:
        raise ShapeMismatch("a pair batch needs an even number of graphs")
    H = ggnn.initial_states(store, batch)
    steps = []
    for _ in range(config.T):
        m, mcache = message_forward(store, H, batch)
        mu, atts = _match(H, batch, config, counter)
        H_next, gcache = gru_forward(store, GRU, H, np.hstack([m, mu]))
        steps.append((mcache, gcache, H, atts))
        H = H_next
    out, rcache = gated_readout_forward(store, READOUT, H, batch.readout)
    return out, (steps, rcache, H)


def backward(store: ParamStore, batch: GraphBatch, config: GmnConfig, cache, dout: np.ndarray) -> None:
    steps, rcache, _ = cache
    d = config.d
    dH = gated_readout_backward(store, READOUT, rcache, dout)
    for mcache, gcache, H, atts in reversed(steps):
        dH, dx = gru_backward(store, GRU, gcache, dH)
        dH = dH + message_backward(store, batch, mcache, dx[:, :d])
        if not config.zero_match:
            dmu = dx[:, d:]
            for p, att in enumerate(atts):
                s1, s2 = _pair_slices(batch, p)
                dh1, dh2 = cross_attention_backward(H[s1], H[s2], att, dmu[s1], dmu[s2], config.match_sign)
                dH[s1] += dh1
                dH[s2] += dh2
    ggnn.node_table_backward(store, batch, dH)


# -- single-pair operations --------------------------------------------------

def propagate_pair_once(g1: FlowGraph, g2: FlowGraph, h1: np.ndarray, h2: np.ndarray,
                        tables: EmbeddingTables, params: ParamStore, config: GmnConfig | None = None):
    """One joint round; state rows follow each graph's own numbering."""
    config = config or GmnConfig(d=h1.shape[1])
    if h1.shape[0] != g1.num_nodes or h2.shape[0] != g2.num_nodes:
        raise ShapeMismatch("state rows do not match graph sizes")
    params = ggnn.with_tables(params, tables)
    batch = make_batch([g1, g2], Vocabulary([]))
    H = np.vstack([h1[batch.orders[0]], h2[batch.orders[1]]])
    m, _ = message_forward(params, H, batch)
    mu, _ = _match(H, batch, config, None)
    H_new, _ = gru_forward(params, GRU, H, np.hstack([m, mu]))
    return (batch.to_original(0, H_new[batch.graph_slice(0)]),
            batch.to_original(1, H_new[batch.graph_slice(1)]))


def embed_pair(g1: FlowGraph, g2: FlowGraph, config: GmnConfig, vocab: Vocabulary, params: ParamStore) -> PairResult:
    batch = make_batch([g1, g2], vocab)
    out, (steps, _, _) = forward(params, batch, config)
    history = []
    kept = steps if config.keep_history else steps[-1:]
    for *_, atts in kept:
        att = atts[0]
        # back to each graph's own node numbering
        o1, o2 = batch.orders
        first = np.empty_like(att.first)
        first[np.ix_(o1, o2)] = att.first
        second = np.empty_like(att.second)
        second[np.ix_(o2, o1)] = att.second
        history.append(AttentionMatrix(first, second))
    return PairResult(out[0], out[1], history)


def export_attention(result: PairResult, g1: FlowGraph, g2: FlowGraph, k: int = 10) -> list[dict]:
    """The ``k`` largest attention weights over both directions of the final step."""
    att = result.final_attention
    cells = []
    for direction, mat, ga, gb in (("1->2", att.first, g1, g2), ("2->1", att.second, g2, g1)):
        for i, j in np.ndindex(*mat.shape):
            cells.append((-mat[i, j], direction, i, j, ga, gb))
    cells.sort(key=lambda c: c[:4])
    out = []
    for neg, direction, i, j, ga, gb in cells[: max(k, 0)]:
        out.append({
            "i": int(i),
            "j": int(j),
            "direction": direction,
            "score": float(-neg),
            "label_i": ga.node_labels[i],
            "label_j": gb.node_labels[j],
            "pos_i": list(ga.positions[i]) if ga.positions and ga.positions[i] else None,
            "pos_j": list(gb.positions[j]) if gb.positions and gb.positions[j] else None,
        })
    return out
