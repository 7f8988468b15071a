"""Hypergraph storage, node-edge pair indexing, text I/O and random generation."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp


class HypergraphError(ValueError):
    """Structural problem with a hypergraph (empty edge, duplicate member, ...)."""


class HypergraphParseError(HypergraphError):
    pass


@dataclass(frozen=True, eq=False)
class Hypergraph:
    """Immutable hypergraph with dense node ids ``[0, n)`` and edge ids ``[0, m)``.

    ``members[e]`` keeps the order in which nodes were given; ``incident[v]``
    lists the edges containing ``v`` in increasing edge id.
    """

    n: int
    members: tuple[tuple[int, ...], ...]
    original_ids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        members = tuple(tuple(int(v) for v in e) for e in self.members)
        object.__setattr__(self, "members", members)
        if self.n < 0:
            raise HypergraphError("node count must be non-negative")
        for e, nodes in enumerate(members):
            if not nodes:
                raise HypergraphError(f"edge {e} is empty")
            if len(set(nodes)) != len(nodes):
                raise HypergraphError(f"duplicate node in edge {e}: {nodes}")
            for v in nodes:
                if not 0 <= v < self.n:
                    raise HypergraphError(f"node id {v} in edge {e} outside [0, {self.n})")
        if self.original_ids is not None:
            ids = np.asarray(self.original_ids, dtype=np.int64)
            if ids.shape != (self.n,):
                raise HypergraphError("original_ids must have one entry per node")
            object.__setattr__(self, "original_ids", ids)

    @property
    def m(self) -> int:
        return len(self.members)

    @cached_property
    def incident(self) -> tuple[tuple[int, ...], ...]:
        inc: list[list[int]] = [[] for _ in range(self.n)]
        for e, nodes in enumerate(self.members):
            for v in nodes:
                inc[v].append(e)
        return tuple(tuple(x) for x in inc)

    @cached_property
    def node_degree(self) -> np.ndarray:
        return np.array([len(x) for x in self.incident], dtype=np.int64)

    @cached_property
    def edge_degree(self) -> np.ndarray:
        return np.array([len(x) for x in self.members], dtype=np.int64)

    @property
    def num_pairs(self) -> int:
        return int(self.edge_degree.sum())

    def node_label(self, v: int) -> int:
        """Original (file) id of dense node ``v``."""
        return int(v if self.original_ids is None else self.original_ids[v])

    def __eq__(self, other):
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return self.n == other.n and self.members == other.members

    def __hash__(self):
        return hash((self.n, self.members))

    def check_symmetry(self) -> bool:
        """Full scan: ``v in members(e)`` iff ``e in incident(v)``."""
        fwd = {(v, e) for e, nodes in enumerate(self.members) for v in nodes}
        bwd = {(v, e) for v, edges in enumerate(self.incident) for e in edges}
        return fwd == bwd


class PairIndex:
    """Dense ids for the node-edge pairs ``(v, e)`` with ``v in e``.

    Pairs are numbered edge by edge (edges by id, members in stored order),
    so every edge slice is a contiguous range.
    """

    def __init__(self, h: Hypergraph):
        self.n = h.n
        self.m = h.m
        sizes = h.edge_degree
        self.P = int(sizes.sum())
        self.edge_ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.pair_edge = np.repeat(np.arange(h.m, dtype=np.int64), sizes)
        self.pair_node = np.fromiter(
            (v for nodes in h.members for v in nodes), dtype=np.int64, count=self.P
        )
        # stable sort keeps incident edges in increasing id order
        self.node_order = np.argsort(self.pair_node, kind="stable")
        counts = np.bincount(self.pair_node, minlength=h.n)
        self.node_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def edge_slice(self, e: int) -> np.ndarray:
        return np.arange(self.edge_ptr[e], self.edge_ptr[e + 1])

    def node_slice(self, v: int) -> np.ndarray:
        return self.node_order[self.node_ptr[v]:self.node_ptr[v + 1]]

    @cached_property
    def pair_to_id(self) -> dict[tuple[int, int], int]:
        return {
            (int(v), int(e)): i
            for i, (v, e) in enumerate(zip(self.pair_node, self.pair_edge))
        }

    @cached_property
    def edge_incidence(self) -> sp.csr_matrix:
        """m x P 0/1 matrix summing pair rows into their edge."""
        return sp.csr_matrix(
            (np.ones(self.P), (self.pair_edge, np.arange(self.P))), shape=(self.m, self.P)
        )

    @cached_property
    def node_incidence(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.ones(self.P), (self.pair_node, np.arange(self.P))), shape=(self.n, self.P)
        )


def build_pair_index(h: Hypergraph) -> PairIndex:
    return PairIndex(h)


def load_hypergraph(path: str | os.PathLike, node_ids: Sequence[int] | None = None) -> Hypergraph:
    """Read one edge per line of whitespace-separated integer node ids.

    Lines starting with ``#`` are comments, except ``# nodes: N`` which
    declares ``N`` dense nodes (ids must then lie in ``[0, N)`` and are kept
    as is). Without it, ids are densified in increasing order of original id,
    or following ``node_ids`` when that universe is given.
    """
    edges: list[list[int]] = []
    declared_n = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("nodes:"):
                    try:
                        declared_n = int(body.split(":", 1)[1])
                    except ValueError:
                        raise HypergraphParseError(f"{path}:{lineno}: bad node count") from None
                continue
            if not line:
                raise HypergraphError(f"{path}:{lineno}: empty edge")
            try:
                edges.append([int(tok) for tok in line.split()])
            except ValueError:
                raise HypergraphParseError(f"{path}:{lineno}: non-integer token in {line!r}") from None
            if any(v < 0 for v in edges[-1]):
                raise HypergraphParseError(f"{path}:{lineno}: negative node id")
            if len(set(edges[-1])) != len(edges[-1]):
                raise HypergraphError(f"{path}:{lineno}: duplicate node in edge")
    if not edges:
        raise HypergraphError(f"{path}: no edges")

    if node_ids is not None:
        universe = np.asarray(node_ids, dtype=np.int64)
        lookup = {int(o): i for i, o in enumerate(universe)}
        try:
            members = [[lookup[v] for v in e] for e in edges]
        except KeyError as exc:
            raise HypergraphError(f"{path}: node id {exc.args[0]} not in node universe") from None
        return Hypergraph(len(universe), members, original_ids=universe)
    if declared_n is not None:
        return Hypergraph(declared_n, edges, original_ids=np.arange(declared_n))
    universe = np.unique(np.concatenate([np.asarray(e) for e in edges]))
    lookup = {int(o): i for i, o in enumerate(universe)}
    return Hypergraph(len(universe), [[lookup[v] for v in e] for e in edges], original_ids=universe)


def write_hypergraph(h: Hypergraph, path: str | os.PathLike) -> None:
    """Write ``h`` with dense ids; ``load_hypergraph`` reads it back unchanged."""
    if h.m == 0:
        raise HypergraphError("cannot write a hypergraph with no edges")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes: {h.n}\n")
        for nodes in h.members:
            fh.write(" ".join(map(str, nodes)) + "\n")


def write_id_map(h: Hypergraph, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["original_id", "dense_id"])
        for v in range(h.n):
            w.writerow([h.node_label(v), v])


DegreeLaw = Union[int, tuple[int, int], Callable[[np.random.Generator], int]]


def _edge_size(law: DegreeLaw, rng: np.random.Generator) -> int:
    if callable(law):
        return int(law(rng))
    if isinstance(law, (int, np.integer)):
        return int(law)
    lo, hi = law
    return int(rng.integers(lo, hi + 1))


def random_hypergraph(n: int, m: int, degree_law: DegreeLaw = (2, 4), seed: int = 0) -> Hypergraph:
    """Edges of random size (``degree_law``) with members drawn without replacement.

    ``degree_law`` is a fixed size, an inclusive ``(low, high)`` uniform range,
    or a callable drawing a size from the generator.
    """
    if n < 2 or m < 1:
        raise HypergraphError("need n >= 2 and m >= 1")
    if not callable(degree_law):
        hi = degree_law if isinstance(degree_law, (int, np.integer)) else degree_law[1]
        if hi > n:
            raise HypergraphError(f"edge size {hi} exceeds node count {n}")
    rng = np.random.default_rng(seed)
    members = []
    for _ in range(m):
        k = _edge_size(degree_law, rng)
        if k > n:
            raise HypergraphError(f"edge size {k} exceeds node count {n}")
        if k < 1:
            raise HypergraphError("edge size must be positive")
        members.append(rng.choice(n, size=k, replace=False).tolist())
    return Hypergraph(n, members)


def permuted(h: Hypergraph, rng: np.random.Generator) -> tuple[Hypergraph, np.ndarray, np.ndarray]:
    """Relabel nodes and edges and shuffle members within every edge.

    Returns ``(h2, pair_map, node_perm)`` where pair ``p`` of ``h2`` is pair
    ``pair_map[p]`` of ``h`` and new node ``node_perm[v]`` is old node ``v``.
    """
    node_perm = rng.permutation(h.n)
    edge_order = rng.permutation(h.m)  # new edge i is old edge edge_order[i]
    idx = PairIndex(h)
    members, pair_map = [], []
    for old_e in edge_order:
        slots = idx.edge_slice(old_e)
        shuffle = rng.permutation(len(slots))
        members.append([int(node_perm[h.members[old_e][j]]) for j in shuffle])
        pair_map.extend(slots[shuffle])
    return Hypergraph(h.n, members), np.asarray(pair_map, dtype=np.int64), node_perm
