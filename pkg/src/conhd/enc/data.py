"""Edge-dependent node classification datasets: schema, directory I/O, generators."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..diffusion import read_semisynthetic_sample, write_semisynthetic_sample
from ..hypergraph import Hypergraph, HypergraphError, PairIndex, load_hypergraph, write_hypergraph

SPLITS = ("train", "val", "test")


class DatasetError(ValueError):
    pass


@dataclass(eq=False)
class EncDataset:
    """Hypergraph, node features and one label per node-edge pair.

    ``labels`` is aligned with ``PairIndex(hypergraph)``; ``splits[e]`` names
    the split of edge ``e`` (all pairs of an edge share it).
    """

    hypergraph: Hypergraph
    X0: np.ndarray
    labels: np.ndarray
    num_classes: int
    splits: np.ndarray

    def __post_init__(self):
        h = self.hypergraph
        self.X0 = np.asarray(self.X0, dtype=np.float64)
        if self.X0.ndim == 1:
            self.X0 = self.X0[:, None]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.splits = np.asarray(self.splits, dtype=object)
        self.index = PairIndex(h)
        if self.X0.shape[0] != h.n:
            raise DatasetError(f"features have {self.X0.shape[0]} rows for {h.n} nodes")
        if self.labels.shape != (self.index.P,):
            raise DatasetError(f"need one label per pair ({self.index.P}), got {self.labels.shape}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DatasetError(f"labels must lie in [0, {self.num_classes})")
        if self.splits.shape != (h.m,):
            raise DatasetError("need exactly one split per edge")
        bad = set(self.splits) - set(SPLITS)
        if bad:
            raise DatasetError(f"unknown split names {sorted(bad)}")

    def split_edges(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.splits == split)

    def split_pairs(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.splits[self.index.pair_edge] == split)


def split_edges(m: int, proportions=(0.6, 0.2, 0.2), seed: int = 0) -> np.ndarray:
    """Random edge-level split; counts are rounded down for train/val, test takes the rest."""
    if len(proportions) != 3 or not np.isclose(sum(proportions), 1.0) or min(proportions) < 0:
        raise DatasetError("split proportions must be three non-negative numbers summing to 1")
    perm = np.random.default_rng(seed).permutation(m)
    n_train = int(np.floor(proportions[0] * m))
    n_val = int(np.floor(proportions[1] * m))
    out = np.empty(m, dtype=object)
    out[perm[:n_train]] = "train"
    out[perm[n_train:n_train + n_val]] = "val"
    out[perm[n_train + n_val:]] = "test"
    return out


def read_features(path) -> tuple[np.ndarray, np.ndarray]:
    """``node_id, x1..xf`` CSV -> (node ids, n x f matrix)."""
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None
    if table.shape[1] < 2:
        raise DatasetError(f"{path}: need a node_id column and at least one feature column")
    node_ids = table[:, 0].astype(np.int64)
    if len(set(node_ids.tolist())) != len(node_ids):
        raise DatasetError(f"{path}: a node is listed twice")
    return node_ids, table[:, 1:]


def load_enc_dataset(path: str | os.PathLike) -> EncDataset:
    """Read ``edges.txt``, ``features.csv``, ``labels.csv`` and ``splits.csv``."""
    path = Path(path)
    for name in ("edges.txt", "features.csv", "labels.csv", "splits.csv"):
        if not (path / name).exists():
            raise DatasetError(f"{path}: missing {name}")
    node_ids, feats = read_features(path / "features.csv")
    h = load_hypergraph(path / "edges.txt", node_ids=node_ids)
    idx = PairIndex(h)
    lookup = {int(o): i for i, o in enumerate(node_ids)}

    labels = np.full(idx.P, -1, dtype=np.int64)
    with open(path / "labels.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, row in enumerate(reader, start=2):
            node, edge, lab = (int(x) for x in row)
            pid = idx.pair_to_id.get((lookup.get(node, -1), edge))
            if pid is None:
                raise DatasetError(f"labels.csv:{lineno}: ({node}, {edge}) is not a node-edge pair")
            labels[pid] = lab
    missing = np.flatnonzero(labels < 0)
    if missing.size:
        p = missing[0]
        raise DatasetError(
            f"missing label for pair (node={h.node_label(idx.pair_node[p])}, edge={idx.pair_edge[p]})"
        )

    splits = np.full(h.m, None, dtype=object)
    with open(path / "splits.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, (edge, split) in enumerate(reader, start=2):
            e = int(edge)
            if not 0 <= e < h.m:
                raise DatasetError(f"splits.csv:{lineno}: unknown edge {e}")
            if splits[e] is not None:
                raise DatasetError(f"splits.csv:{lineno}: edge {e} assigned to both {splits[e]} and {split}")
            splits[e] = split
    if any(s is None for s in splits):
        raise DatasetError("splits.csv does not cover every edge")
    return EncDataset(h, feats, labels, int(labels.max()) + 1, splits)


def write_enc_dataset(ds: EncDataset, path: str | os.PathLike) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    h, idx = ds.hypergraph, ds.index
    with open(path / "edges.txt", "w", encoding="utf-8") as fh:
        for nodes in h.members:
            fh.write(" ".join(str(h.node_label(v)) for v in nodes) + "\n")
    with open(path / "features.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id"] + [f"x{j + 1}" for j in range(ds.X0.shape[1])])
        for v in range(h.n):
            w.writerow([h.node_label(v)] + [repr(float(x)) for x in ds.X0[v]])
    with open(path / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "edge_id", "label"])
        for p in range(idx.P):
            w.writerow([h.node_label(idx.pair_node[p]), idx.pair_edge[p], ds.labels[p]])
    with open(path / "splits.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge_id", "split"])
        for e in range(h.m):
            w.writerow([e, ds.splits[e]])


def make_outsider_dataset(
    h: Hypergraph, X0, variants: int = 5, seed: int = 0, proportions=(0.6, 0.2, 0.2)
) -> EncDataset:
    """Outsider identification as ENC.

    Edges with at most 3 members are dropped. Every remaining edge yields
    ``variants`` new edges in which ``floor(d_e / 2)`` members are replaced by
    distinct non-members; replaced nodes get label 1, kept members label 0.
    """
    if variants < 1:
        raise DatasetError("variants must be >= 1")
    rng = np.random.default_rng(seed)
    members, labels = [], []
    for nodes in h.members:
        k = len(nodes)
        if k <= 3:
            continue
        swap = k // 2
        outside = np.setdiff1d(np.arange(h.n), nodes)
        if len(outside) < swap:
            raise DatasetError(f"edge {nodes} needs {swap} outsiders but only {len(outside)} non-members exist")
        for _ in range(variants):
            slots = rng.choice(k, size=swap, replace=False)
            picks = rng.choice(outside, size=swap, replace=False)
            new = list(nodes)
            lab = [0] * k
            for s, v in zip(slots, picks):
                new[s] = int(v)
                lab[s] = 1
            members.append(new)
            labels.extend(lab)
    if not members:
        raise DatasetError("no edge has more than 3 members")
    out = Hypergraph(h.n, members, original_ids=h.original_ids)
    return EncDataset(out, X0, labels, 2, split_edges(len(members), proportions, seed + 1))


def rank_labels(h: Hypergraph, score) -> np.ndarray:
    """Tercile of each member's within-edge rank by ``score`` (ties by node id)."""
    score = np.asarray(score, dtype=np.float64)
    idx = PairIndex(h)
    labels = np.empty(idx.P, dtype=np.int64)
    for e, nodes in enumerate(h.members):
        nodes = np.asarray(nodes)
        order = np.lexsort((nodes, score[nodes]))
        rank = np.empty(len(nodes), dtype=np.int64)
        rank[order] = np.arange(len(nodes))
        labels[idx.edge_slice(e)] = (3 * rank) // len(nodes)
    return labels


def make_rank_label_dataset(
    h: Hypergraph, seed: int = 0, noise_features: int = 0, proportions=(0.6, 0.2, 0.2)
) -> EncDataset:
    """Label of (v, e) is the tercile of v's latent score among the members of e.

    The latent score is node feature 0; ``noise_features`` extra Gaussian
    columns can be appended.
    """
    if min(h.edge_degree) < 2:
        raise DatasetError("rank labels need edges with at least 2 members")
    rng = np.random.default_rng(seed)
    score = rng.uniform(0.0, 1.0, size=h.n)
    X0 = np.column_stack([score] + [rng.standard_normal(h.n) for _ in range(noise_features)])
    return EncDataset(h, X0, rank_labels(h, score), 3, split_edges(h.m, proportions, seed + 1))


def planted_hypergraph(
    n: int, m: int, communities: int = 4, sizes=(4, 8), noise: float = 0.5, seed: int = 0
) -> tuple[Hypergraph, np.ndarray]:
    """Edges drawn inside random node communities; features are noisy community one-hots."""
    rng = np.random.default_rng(seed)
    comm = rng.integers(0, communities, size=n)
    groups = [np.flatnonzero(comm == c) for c in range(communities)]
    members = []
    for _ in range(m):
        c = int(rng.integers(communities))
        k = int(rng.integers(sizes[0], sizes[1] + 1))
        if len(groups[c]) < k:
            raise HypergraphError(f"community {c} has fewer than {k} nodes")
        members.append(rng.choice(groups[c], size=k, replace=False).tolist())
    X0 = np.eye(communities)[comm] + noise * rng.standard_normal((n, communities))
    return Hypergraph(n, members), X0


def write_semisynthetic_dataset(path, h: Hypergraph, samples, split: dict) -> None:
    """``edges.txt``, ``samples/sample_XXX.csv`` (pair_id, h0, h2) and ``splits.csv`` (sample_id, split)."""
    path = Path(path)
    (path / "samples").mkdir(parents=True, exist_ok=True)
    write_hypergraph(h, path / "edges.txt")
    width = max(3, len(str(len(samples) - 1)))
    for i, (H0, H2) in enumerate(samples):
        write_semisynthetic_sample(path / "samples" / f"sample_{i:0{width}d}.csv", H0, H2)
    names = np.empty(len(samples), dtype=object)
    for name, ids in split.items():
        names[np.asarray(ids, dtype=np.int64)] = name
    with open(path / "splits.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "split"])
        for i, name in enumerate(names):
            w.writerow([i, name])


def load_semisynthetic_dataset(path) -> tuple[Hypergraph, list, dict]:
    path = Path(path)
    for name in ("edges.txt", "splits.csv", "samples"):
        if not (path / name).exists():
            raise DatasetError(f"{path}: missing {name}")
    h = load_hypergraph(path / "edges.txt")
    files = sorted((path / "samples").glob("sample_*.csv"))
    samples = [read_semisynthetic_sample(f) for f in files]
    split = {k: [] for k in SPLITS}
    with open(path / "splits.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, (sid, name) in enumerate(reader, start=2):
            if name not in split or not 0 <= int(sid) < len(samples):
                raise DatasetError(f"splits.csv:{lineno}: bad row ({sid}, {name})")
            split[name].append(int(sid))
    if sum(len(v) for v in split.values()) != len(samples):
        raise DatasetError("splits.csv must assign every sample exactly once")
    return h, samples, split
