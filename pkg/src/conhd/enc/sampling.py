"""Mini-batches of target edges with their direct-neighbor subgraph."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..hypergraph import Hypergraph, PairIndex
from .data import EncDataset


@dataclass
class Batch:
    edges: np.ndarray  # global ids of the target edges
    hypergraph: Hypergraph  # induced subgraph, dense ids
    node_map: np.ndarray  # subgraph node -> global node
    edge_map: np.ndarray  # subgraph edge -> global edge
    pair_map: np.ndarray  # subgraph pair -> global pair
    target_rows: np.ndarray  # subgraph pairs belonging to target edges
    labels: np.ndarray  # labels of target_rows


def sample_batch(ds: EncDataset, edge_ids, neighbor_sample: int = 40, seed: int = 0) -> Batch:
    """Target edges plus, for every member node, up to ``neighbor_sample`` incident edges.

    Target edges are always kept; the remaining slots are filled uniformly
    without replacement from the node's other incident edges. Every included
    edge comes with its full member list.
    """
    edges = np.unique(np.asarray(edge_ids, dtype=np.int64))
    if edges.size == 0:
        raise ValueError("sample_batch needs at least one target edge")
    h, idx = ds.hypergraph, ds.index
    rng = np.random.default_rng(seed)
    targets = set(edges.tolist())
    chosen = set(targets)
    for v in sorted({v for e in edges for v in h.members[e]}):
        incident = h.incident[v]
        own = [e for e in incident if e in targets]
        others = np.array([e for e in incident if e not in targets], dtype=np.int64)
        room = max(neighbor_sample - len(own), 0)
        if len(others) > room:
            others = rng.choice(others, size=room, replace=False)
        chosen.update(int(e) for e in others)
    edge_map = np.concatenate([edges, np.array(sorted(chosen - targets), dtype=np.int64)])
    node_map = np.array(sorted({v for e in edge_map for v in h.members[e]}), dtype=np.int64)
    local = {int(v): i for i, v in enumerate(node_map)}
    sub = Hypergraph(len(node_map), [[local[v] for v in h.members[e]] for e in edge_map])
    pair_map = np.concatenate([idx.edge_slice(e) for e in edge_map])
    n_target = int(sum(h.edge_degree[e] for e in edges))
    target_rows = np.arange(n_target)
    return Batch(edges, sub, node_map, edge_map, pair_map, target_rows, ds.labels[pair_map[target_rows]])


def subgraph_index(batch: Batch) -> PairIndex:
    return PairIndex(batch.hypergraph)
