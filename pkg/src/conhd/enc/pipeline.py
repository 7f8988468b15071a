"""Training, evaluation, embedding export and the diffusion-approximation experiment."""

from __future__ import annotations

import copy
import csv
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .. import seeding
from ..diffusion import generate_semisynthetic
from ..hypergraph import Hypergraph, PairIndex
from ..neural.model import CoNHD, ModelConfig, PairGraph
from ..neural.training import Adam, backward, loss_cross_entropy, loss_mae
from .data import EncDataset
from .metrics import f1_scores, mean_absolute_error
from .sampling import sample_batch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 64
    patience: int = 10
    min_delta: float = 1e-4
    seed: int = 0


@dataclass
class TrainResult:
    model: CoNHD
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("-inf")


def build_model(model_cfg: ModelConfig, in_features: int, out_dim: int, seed: int) -> CoNHD:
    seeding.seed_torch(seed, "init")
    return CoNHD(model_cfg, in_features, out_dim)


@torch.no_grad()
def predict_logits(model: CoNHD, ds: EncDataset, graph: PairGraph | None = None) -> torch.Tensor:
    """Full-graph forward in eval mode; one row of logits per pair."""
    was_training = model.training
    model.eval()
    graph = graph or PairGraph(ds.index, ds.hypergraph)
    out = model(graph, ds.X0)
    model.train(was_training)
    return out


def evaluate(ds: EncDataset, model: CoNHD, split: str, logits: torch.Tensor | None = None) -> dict:
    """Micro/Macro-F1 (and loss) over the pairs of one split."""
    rows = ds.split_pairs(split)
    if rows.size == 0:
        raise ValueError(f"split {split!r} is empty")
    if logits is None:
        logits = predict_logits(model, ds)
    sub = logits[torch.as_tensor(rows)]
    labels = ds.labels[rows]
    scores = f1_scores(sub.argmax(dim=1).numpy(), labels, ds.num_classes)
    scores["loss"] = float(loss_cross_entropy(sub, labels))
    scores["mae"] = None
    return scores


def _log_row(epoch, split, scores):
    return {
        "epoch": epoch,
        "split": split,
        "loss": scores["loss"],
        "micro_f1": scores["micro_f1"],
        "macro_f1": scores["macro_f1"],
    }


def train(ds: EncDataset, model_cfg: ModelConfig, train_cfg: TrainConfig) -> TrainResult:
    """Mini-batch training over shuffled train edges with early stopping on val Micro-F1.

    Each epoch ends with an eval-mode pass whose train/val scores are logged;
    the returned model carries the best validation weights.
    """
    model = build_model(model_cfg, ds.X0.shape[1], ds.num_classes, train_cfg.seed)
    seeding.seed_torch(train_cfg.seed, "dropout")
    order_rng = seeding.rng(train_cfg.seed, "batches")
    opt = Adam(model.parameters(), lr=train_cfg.lr)
    train_edges = ds.split_edges("train")
    if train_edges.size == 0:
        raise ValueError("no training edges")
    has_val = ds.split_edges("val").size > 0
    monitor = "val" if has_val else "train"
    full_graph = PairGraph(ds.index, ds.hypergraph)

    result = TrainResult(model)

    def record(epoch):
        logits = predict_logits(model, ds, full_graph)
        rows = []
        for split in ("train", "val"):
            if ds.split_edges(split).size:
                rows.append(_log_row(epoch, split, evaluate(ds, model, split, logits)))
        result.log.extend(rows)
        return next(r for r in rows if r["split"] == monitor)["micro_f1"]

    best = record(0)
    best_state = copy.deepcopy(model.state_dict())
    result.best_val, stale = best, 0
    for epoch in range(1, train_cfg.epochs + 1):
        model.train()
        perm = order_rng.permutation(train_edges)
        for start in range(0, len(perm), train_cfg.batch_size):
            chunk = perm[start:start + train_cfg.batch_size]
            batch = sample_batch(
                ds, chunk, model_cfg.neighbor_sample, seed=int(order_rng.integers(2**63 - 1))
            )
            g = PairGraph.build(batch.hypergraph)
            logits = model(g, ds.X0[batch.node_map])[torch.as_tensor(batch.target_rows)]
            loss = loss_cross_entropy(logits, batch.labels)
            backward(loss, opt.params)
            opt.step()
        score = record(epoch)
        if score > result.best_val + train_cfg.min_delta:
            result.best_val, result.best_epoch, stale = score, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            stale += 1
            if stale >= train_cfg.patience:
                log.info("early stop at epoch %d (best %d)", epoch, result.best_epoch)
                break
    model.load_state_dict(best_state)
    model.eval()
    return result


def write_train_log(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "split", "loss", "micro_f1", "macro_f1"])
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def export_embeddings(ds: EncDataset, model: CoNHD, path, nodes=None, edges=None) -> int:
    """Write rows (node_id, edge_id, label, h_1..h_d) for pairs passing the filters."""
    with torch.no_grad():
        model.eval()
        H = model.embed(PairGraph(ds.index, ds.hypergraph), ds.X0).numpy()
    idx, h = ds.index, ds.hypergraph
    keep = np.ones(idx.P, dtype=bool)
    if nodes is not None:
        dense = {h.node_label(v): v for v in range(h.n)}
        keep &= np.isin(idx.pair_node, [dense[v] for v in nodes if v in dense])
    if edges is not None:
        keep &= np.isin(idx.pair_edge, list(edges))
    rows = np.flatnonzero(keep)
    if rows.size == 0:
        warnings.warn("embedding filter matched no node-edge pairs", stacklevel=2)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "edge_id", "label"] + [f"h_{j + 1}" for j in range(H.shape[1])])
        for p in rows:
            w.writerow(
                [h.node_label(idx.pair_node[p]), idx.pair_edge[p], ds.labels[p]]
                + [repr(float(x)) for x in H[p]]
            )
    return int(rows.size)


# ---------------------------------------------------------------------------
# approximating classical diffusion


@dataclass
class ApproxConfig:
    samples: int = 100
    n_val: int = 20
    n_test: int = 20
    epochs: int = 300
    lr: float = 1e-3
    batch_samples: int = 10
    patience: int = 50
    normalize: bool = True
    seed: int = 0


def node_features_from_pairs(idx: PairIndex, H0: np.ndarray) -> np.ndarray:
    X = np.zeros((idx.n, H0.shape[1]))
    X[idx.pair_node] = H0
    return X


def sample_split(count: int, n_val: int, n_test: int, seed: int) -> dict:
    """Seeded shuffle of sample ids: the first ``n_test`` are test, the next ``n_val`` validation."""
    if n_val + n_test >= count:
        raise ValueError(f"{count} samples leave nothing to train on after {n_val} val + {n_test} test")
    perm = seeding.rng(seed, "sample-split").permutation(count)
    return {"test": np.sort(perm[:n_test]), "val": np.sort(perm[n_test:n_test + n_val]),
            "train": np.sort(perm[n_test + n_val:])}


def _scales(H0s: np.ndarray, normalize: bool) -> np.ndarray:
    if not normalize:
        return np.ones(len(H0s))
    return np.sqrt(np.mean(H0s**2, axis=(1, 2))) + 1e-12


def approx_experiment(
    h: Hypergraph,
    kind: str,
    model_cfg: ModelConfig,
    cfg: ApproxConfig = ApproxConfig(),
    samples: list | None = None,
    model: CoNHD | None = None,
    train_model: bool = True,
    split: dict | None = None,
) -> dict:
    """Fit CoNHD (MAE loss) to map H0 -> H2 of a classical diffusion.

    Samples are split train/val/test by a seeded shuffle unless ``split``
    maps each split name to sample indices. With ``normalize``
    each sample is divided by the RMS of its H0 before entering the model and
    the prediction is scaled back (the generators are positively homogeneous).
    """
    idx = PairIndex(h)
    graph = PairGraph(idx, h)
    if samples is None:
        samples = generate_semisynthetic(h, idx, kind, cfg.samples, seeding.derive_seed(cfg.seed, "samples"))
    H0s = np.stack([s[0] for s in samples])
    H2s = np.stack([s[1] for s in samples])
    if split is None:
        split = sample_split(len(samples), cfg.n_val, cfg.n_test, cfg.seed)
    tr, val, test = (np.asarray(split[k], dtype=np.int64) for k in ("train", "val", "test"))
    if tr.size == 0 or val.size == 0 or test.size == 0:
        raise ValueError("approximation needs non-empty train, val and test samples")
    scale = _scales(H0s, cfg.normalize)
    X = np.stack([node_features_from_pairs(idx, H0s[i]) for i in range(len(samples))]) / scale[:, None, None]
    Y = H2s / scale[:, None, None]

    if model is None:
        model = build_model(model_cfg, 1, 1, cfg.seed)
    dtype = model_cfg.torch_dtype

    def predict(ids):
        out = []
        with torch.no_grad():
            model.eval()
            for i in ids:
                out.append(model(graph, X[i]).numpy() * scale[i])
        return np.stack(out) if out else np.zeros((0,) + H2s.shape[1:])

    def mae(ids):
        return mean_absolute_error(predict(ids), H2s[ids])

    history = []
    t0 = time.time()
    if train_model and cfg.epochs > 0:
        seeding.seed_torch(cfg.seed, "dropout")
        order_rng = seeding.rng(cfg.seed, "approx-batches")
        opt = Adam(model.parameters(), lr=cfg.lr)
        best, best_state, stale = mae(val), copy.deepcopy(model.state_dict()), 0
        tiles = {}
        for epoch in range(1, cfg.epochs + 1):
            model.train()
            order = order_rng.permutation(tr)
            for start in range(0, len(order), cfg.batch_samples):
                ids = order[start:start + cfg.batch_samples]
                g = tiles.setdefault(len(ids), graph.tile(len(ids)))
                pred = model(g, X[ids].reshape(-1, 1))
                target = torch.as_tensor(Y[ids].reshape(-1, 1), dtype=dtype)
                loss = loss_mae(pred, target)
                backward(loss, opt.params)
                opt.step()
            val_mae = mae(val)
            history.append({"epoch": epoch, "train_loss": float(loss.detach()), "val_mae": val_mae})
            if val_mae < best - 1e-12:
                best, best_state, stale = val_mae, copy.deepcopy(model.state_dict()), 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
        model.load_state_dict(best_state)
    model.eval()
    return {
        "kind": kind,
        "model_mae": mae(test),
        "identity_mae": mean_absolute_error(H0s[test], H2s[test]),
        "val_mae": mae(val),
        "epochs_run": len(history),
        "train_seconds": time.time() - t0,
        "history": history,
        "config": asdict(cfg),
        "model": model_cfg.to_dict(),
    }
