"""Training, threshold tuning and prediction for fragment-pair similarity.

Both models score a pair by the cosine of its two graph vectors and are
trained with the squared error against labels -1/+1.  A batch of pairs
is one disjoint-union graph batch laid out ``[a0, b0, a1, b1, ...]``.
"""

from __future__ import annotations

import enum
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import ggnn, gmn
from .batch import make_batch
from .dataset import FragmentPair, FragmentStore, check_pairs
from .errors import DataError, EmptyDataset, ModelKindMismatch, NonFiniteLoss, UnknownFragment, ZeroVector
from .metrics import prf, tune_threshold as tune_on_scores
from .nn import ParamStore, adam_step
from .vocab import Vocabulary, build_vocab

CHECKPOINT_FORMAT = "flowclone-checkpoint"
CHECKPOINT_VERSION = 1


class ModelKind(str, enum.Enum):
    GGNN = "ggnn"
    GMN = "gmn"


@dataclass(frozen=True)
class TrainConfig:
    model: ModelKind = ModelKind.GMN
    d: int = 100
    T: int = 4
    lr: float = 0.001
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    # non-clone pairs kept per clone pair in each epoch's training view
    balance: float = 1.0
    match_sign: float = 1.0
    min_count: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "model", ModelKind(self.model))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        for name in ("d", "T", "batch_size", "epochs", "min_count"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1")
        if self.lr < 0:
            out.append("lr must be >= 0")
        if self.balance <= 0:
            out.append("balance must be > 0")
        if self.match_sign not in (1.0, -1.0):
            out.append("match_sign must be +1 or -1")
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.value
        return d


def similarity(v1: np.ndarray, v2: np.ndarray) -> float:
    n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
    if n1 == 0 or n2 == 0:
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    return float(np.dot(v1, v2) / (n1 * n2))


def _cosine_rows(a: np.ndarray, b: np.ndarray):
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ZeroVector("a graph vector is exactly zero")
    s = np.sum(a * b, axis=1) / (na * nb)
    return s, (a, b, na, nb, s)


def _cosine_rows_backward(cache, ds: np.ndarray):
    a, b, na, nb, s = cache
    da = (b / (na * nb)[:, None] - s[:, None] * a / (na**2)[:, None]) * ds[:, None]
    db = (a / (na * nb)[:, None] - s[:, None] * b / (nb**2)[:, None]) * ds[:, None]
    return da, db


@dataclass
class CloneModel:
    config: TrainConfig
    vocab: Vocabulary
    params: ParamStore
    threshold: float | None = None

    @property
    def kind(self) -> ModelKind:
        return self.config.model

    @classmethod
    def create(cls, config: TrainConfig, vocab: Vocabulary) -> "CloneModel":
        gru_input = config.d if config.model is ModelKind.GGNN else 2 * config.d
        return cls(config, vocab, ggnn.init_params(vocab.size, config.d, gru_input, config.seed))

    def _net(self):
        if self.kind is ModelKind.GGNN:
            return ggnn.GgnnConfig(self.config.d, self.config.T)
        return gmn.GmnConfig(self.config.d, self.config.T, match_sign=self.config.match_sign)

    def forward(self, graph_pairs):
        batch = make_batch([g for pair in graph_pairs for g in pair], self.vocab)
        net = self._net()
        if self.kind is ModelKind.GGNN:
            out, cache = ggnn.forward(self.params, batch, net)
        else:
            out, cache = gmn.forward(self.params, batch, net)
        return out, (batch, net, cache)

    def backward(self, fcache, dout: np.ndarray) -> None:
        batch, net, cache = fcache
        if self.kind is ModelKind.GGNN:
            ggnn.backward(self.params, batch, cache, dout)
        else:
            gmn.backward(self.params, batch, net, cache, dout)

    def score_graph_pairs(self, graph_pairs, chunk: int | None = None) -> np.ndarray:
        chunk = chunk or self.config.batch_size
        scores = []
        for k in range(0, len(graph_pairs), chunk):
            out, _ = self.forward(graph_pairs[k : k + chunk])
            s, _ = _cosine_rows(out[0::2], out[1::2])
            scores.append(s)
        return np.concatenate(scores) if scores else np.zeros(0)

    def loss_and_grads(self, graph_pairs, labels: np.ndarray) -> float:
        """Mean squared error over the batch; gradients accumulate into ``params.grads``."""
        out, fcache = self.forward(graph_pairs)
        s, ccache = _cosine_rows(out[0::2], out[1::2])
        y = np.asarray(labels, dtype=np.float64)
        loss = float(np.mean((y - s) ** 2))
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss became {loss}")
        ds = 2.0 * (s - y) / len(y)
        da, db = _cosine_rows_backward(ccache, ds)
        dout = np.empty_like(out)
        dout[0::2], dout[1::2] = da, db
        self.backward(fcache, dout)
        return loss

    # -- persistence ----------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "model": self.kind.value,
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "threshold": self.threshold,
            "vocab": self.vocab.labels,
            "params": {n: {"shape": list(self.params[n].shape), "data": self.params[n].ravel().tolist()}
                       for n in self.params.names()},
        }
        return json.dumps(doc, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CloneModel":
        doc = json.loads(text)
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise DataError("not a model checkpoint")
        if doc.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {doc.get('version')}")
        params = ParamStore()
        for name, rec in doc["params"].items():
            params.add(name, np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"]))
        vocab = Vocabulary(doc["vocab"][1:])
        return cls(TrainConfig(**doc["config"]), vocab, params, doc.get("threshold"))

    def save(self, path: str | Path) -> None:
        atomic_write(path, self.to_json())

    @classmethod
    def load(cls, path: str | Path, expect: ModelKind | str | None = None) -> "CloneModel":
        model = cls.from_json(Path(path).read_text(encoding="utf-8"))
        if expect is not None and ModelKind(expect) is not model.kind:
            raise ModelKindMismatch(f"checkpoint holds a {model.kind.value} model, {ModelKind(expect).value} was requested")
        return model


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


# -- training -----------------------------------------------------------------

@dataclass
class TrainResult:
    model: CloneModel
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    initial_loss: float | None = None


def graph_pairs(pairs: Sequence[FragmentPair], store: FragmentStore):
    return [(store.graph(p.id1), store.graph(p.id2)) for p in pairs]


def balanced_view(pairs: Sequence[FragmentPair], ratio: float, rng: np.random.Generator) -> list[FragmentPair]:
    """All clone pairs plus a fresh random sample of ``ratio`` non-clones per clone."""
    pos = [p for p in pairs if p.label == 1]
    neg = [p for p in pairs if p.label != 1]
    keep = min(len(neg), int(round(ratio * len(pos))))
    picked = rng.choice(len(neg), size=keep, replace=False) if keep else []
    view = pos + [neg[i] for i in sorted(picked)]
    return [view[i] for i in rng.permutation(len(view))]


def _labels(pairs: Sequence[FragmentPair]) -> np.ndarray:
    return np.asarray([p.label for p in pairs], dtype=np.int64)


def train(config: TrainConfig, train_pairs: Sequence[FragmentPair], valid_pairs: Sequence[FragmentPair],
          store: FragmentStore, log: Callable[[dict], None] | None = None,
          measure_initial: bool = False) -> TrainResult:
    """Minibatch Adam on balanced training views; keeps the best-validation-F1 parameters."""
    if not train_pairs:
        raise EmptyDataset("no training pairs")
    labels = {p.label for p in train_pairs}
    if labels != {-1, 1}:
        raise EmptyDataset("training needs at least one clone and one non-clone pair")
    check_pairs(train_pairs, store)
    check_pairs(valid_pairs, store)
    rng = np.random.default_rng(config.seed)
    train_ids = sorted({fid for p in train_pairs for fid in (p.id1, p.id2)})
    vocab = build_vocab(store.graphs(train_ids), config.min_count)
    model = CloneModel.create(config, vocab)
    gp_train = dict(zip(train_pairs, graph_pairs(train_pairs, store)))
    gp_valid = graph_pairs(valid_pairs, store)
    y_valid = _labels(valid_pairs)

    result = TrainResult(model)
    if measure_initial:
        result.initial_loss = _mean_loss(model, list(gp_train.values()), _labels(train_pairs))
    best = None
    for epoch in range(1, config.epochs + 1):
        view = balanced_view(train_pairs, config.balance, rng)
        losses, weights = [], []
        for k in range(0, len(view), config.batch_size):
            chunk = view[k : k + config.batch_size]
            loss = model.loss_and_grads([gp_train[p] for p in chunk], _labels(chunk))
            adam_step(model.params, config.lr)
            if not model.params.all_finite():
                raise NonFiniteLoss(f"parameters became non-finite in epoch {epoch}")
            losses.append(loss)
            weights.append(len(chunk))
        record = {"epoch": epoch, "train_loss": float(np.average(losses, weights=weights))}
        if len(valid_pairs):
            scores = model.score_graph_pairs(gp_valid)
            sigma, r = tune_on_scores(scores, y_valid)
            record.update(valid_P=r.precision, valid_R=r.recall, valid_F1=r.f1, sigma=sigma,
                          valid_loss=float(np.mean((y_valid - scores) ** 2)))
        else:
            record.update(valid_P=None, valid_R=None, valid_F1=None, sigma=None, valid_loss=None)
        result.log.append(record)
        if log:
            log(record)
        # best validation F1, ties to the lower validation loss
        if record["valid_F1"] is not None:
            key = (record["valid_F1"], -record["valid_loss"])
        else:
            key = (0.0, -record["train_loss"])
        if best is None or key > best[0]:
            best = (key, epoch, model.params.copy(), record["sigma"])
    _, result.best_epoch, params, sigma = best
    result.model = CloneModel(config, vocab, params, sigma)
    return result


def _mean_loss(model: CloneModel, gps, labels: np.ndarray) -> float:
    s = model.score_graph_pairs(gps)
    return float(np.mean((labels - s) ** 2))


def score_pairs(model: CloneModel, pairs: Sequence[FragmentPair], store: FragmentStore) -> np.ndarray:
    check_pairs(pairs, store)
    return model.score_graph_pairs(graph_pairs(pairs, store))


def tune_threshold(model: CloneModel, valid_pairs: Sequence[FragmentPair], store: FragmentStore) -> float:
    sigma, _ = tune_on_scores(score_pairs(model, valid_pairs, store), _labels(valid_pairs))
    return sigma


def predict(model: CloneModel, sigma: float, pairs: Sequence[FragmentPair], store: FragmentStore) -> list[dict]:
    for p in pairs:
        for fid in (p.id1, p.id2):
            if fid not in store:
                raise UnknownFragment(f"unknown fragment {fid!r}")
    if not pairs:
        return []
    scores = score_pairs(model, pairs, store)
    return [{"id1": p.id1, "id2": p.id2, "score": float(s), "verdict": bool(s >= sigma)}
            for p, s in zip(pairs, scores)]


def evaluate_f1(model: CloneModel, sigma: float, pairs: Sequence[FragmentPair], store: FragmentStore) -> float:
    return prf(score_pairs(model, pairs, store), _labels(pairs), sigma).f1


def with_config(config: TrainConfig, **changes) -> TrainConfig:
    return replace(config, **changes)
