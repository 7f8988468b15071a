"""Wall-time scaling of a CoNHD forward+backward pass against sum_e d_e."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from . import seeding
from .hypergraph import random_hypergraph
from .neural.model import CoNHD, ModelConfig, PairGraph


@dataclass
class BenchConfig:
    base_pairs: int = 10_000
    rungs: int = 4
    edge_sizes: tuple = (2, 6)
    pairs_per_node: int = 4
    repeats: int = 3
    warmup: int = 1
    seed: int = 0


BENCH_COLUMNS = ["rung", "sum_edge_degree", "num_edges", "num_nodes", "wall_time"]


def ladder_hypergraph(target_pairs: int, cfg: BenchConfig, rung: int):
    """Random hypergraph with roughly ``target_pairs`` pairs and constant mean node degree."""
    mean_size = 0.5 * (cfg.edge_sizes[0] + cfg.edge_sizes[1])
    m = max(1, int(round(target_pairs / mean_size)))
    n = max(cfg.edge_sizes[1], int(round(target_pairs / cfg.pairs_per_node)))
    return random_hypergraph(n, m, tuple(cfg.edge_sizes), seed=seeding.derive_seed(cfg.seed, f"bench/{rung}"))


def time_step(model: CoNHD, g: PairGraph, X0, repeats: int, warmup: int) -> float:
    """Minimum over ``repeats`` of one forward+backward pass."""
    params = [p for p in model.parameters() if p.requires_grad]
    best = np.inf
    for r in range(warmup + repeats):
        t = time.perf_counter()
        loss = model(g, X0).square().mean()
        torch.autograd.grad(loss, params, allow_unused=True)
        dt = time.perf_counter() - t
        if r >= warmup:
            best = min(best, dt)
    return best


def fit_exponent(sizes, times) -> tuple[float, float]:
    """Least-squares slope and intercept of log(time) on log(size)."""
    slope, intercept = np.polyfit(np.log(np.asarray(sizes, float)), np.log(np.asarray(times, float)), 1)
    return float(slope), float(intercept)


def run_bench(model_cfg: ModelConfig, cfg: BenchConfig) -> dict:
    seeding.seed_torch(cfg.seed, "bench-init")
    model = CoNHD(model_cfg, 1, 1).train()
    rows = []
    for rung in range(cfg.rungs):
        h = ladder_hypergraph(cfg.base_pairs * 2**rung, cfg, rung)
        g = PairGraph.build(h)
        X0 = seeding.rng(cfg.seed, f"bench-x/{rung}").standard_normal((h.n, 1))
        seeding.seed_torch(cfg.seed, f"bench-dropout/{rung}")
        wall = time_step(model, g, X0, cfg.repeats, cfg.warmup)
        rows.append({"rung": rung, "sum_edge_degree": g.P, "num_edges": h.m, "num_nodes": h.n, "wall_time": wall})
    slope, intercept = fit_exponent([r["sum_edge_degree"] for r in rows], [r["wall_time"] for r in rows])
    ratios = [b["wall_time"] / a["wall_time"] for a, b in zip(rows, rows[1:])]
    return {"rows": rows, "exponent": slope, "intercept": intercept, "ratios": ratios}
