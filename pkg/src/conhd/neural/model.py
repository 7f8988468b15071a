"""CoNHD: layers that learn the edge and node diffusion operators of
co-representation hypergraph diffusion."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np
import torch
from torch import nn

from ..hypergraph import Hypergraph, PairIndex
from .ops import MLP, mean_ablate, make_operator, mlp_dims

DTYPES = {"float64": torch.float64, "float32": torch.float32}


@dataclass
class ModelConfig:
    operator: str = "UNB"
    d: int = 128
    layers: int = 2
    share_weights: bool = True
    method: str = "GD"
    phi_equivariant: bool = True
    varphi_equivariant: bool = True
    inducing_points: int = 4
    heads: int = 4
    mlp_depth: int = 2
    head_depth: int = 2
    dropout: float = 0.7
    neighbor_sample: int = 40
    rank_feature: bool = False
    dtype: str = "float64"

    def __post_init__(self):
        if self.operator not in ("UNB", "ISAB"):
            raise ValueError(f"operator must be UNB or ISAB, got {self.operator!r}")
        if self.method not in ("GD", "ADMM"):
            raise ValueError(f"method must be GD or ADMM, got {self.method!r}")
        if self.d < 1 or self.layers < 1 or self.inducing_points < 1:
            raise ValueError("d, layers and inducing_points must be >= 1")
        if self.d % self.heads:
            raise ValueError(f"heads ({self.heads}) must divide d ({self.d})")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {sorted(DTYPES)}")

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def torch_dtype(self):
        return DTYPES[self.dtype]


class PairGraph:
    """Tensor view of a PairIndex: owning edge/node of every pair."""

    def __init__(self, idx: PairIndex, h: Hypergraph | None = None):
        self.idx = idx
        self.P, self.n, self.m = idx.P, idx.n, idx.m
        self.pair_edge = torch.as_tensor(idx.pair_edge, dtype=torch.long)
        self.pair_node = torch.as_tensor(idx.pair_node, dtype=torch.long)
        self.hypergraph = h

    @classmethod
    def build(cls, h: Hypergraph) -> "PairGraph":
        return cls(PairIndex(h), h)

    def tile(self, copies: int) -> "PairGraph":
        """Disjoint union of ``copies`` copies (for batching samples on one structure)."""
        out = object.__new__(PairGraph)
        out.idx, out.hypergraph = None, None
        out.P, out.n, out.m = self.P * copies, self.n * copies, self.m * copies
        shift = torch.arange(copies).repeat_interleave(self.P)
        out.pair_edge = self.pair_edge.repeat(copies) + shift * self.m
        out.pair_node = self.pair_node.repeat(copies) + shift * self.n
        return out

    def rank_feature(self) -> torch.Tensor:
        """Within-edge rank of each member's node degree, scaled to [0, 1]."""
        deg = self.hypergraph.node_degree
        out = np.zeros(self.P)
        for e in range(self.m):
            rows = self.idx.edge_slice(e)
            nodes = self.idx.pair_node[rows]
            order = np.lexsort((nodes, deg[nodes]))
            ranks = np.empty(len(rows))
            ranks[order] = np.arange(len(rows))
            out[rows] = ranks / max(len(rows) - 1, 1)
        return torch.as_tensor(out)[:, None]


@dataclass
class DiffusionInfoState:
    H: torch.Tensor
    H0: torch.Tensor
    M: torch.Tensor | None = None
    M2: torch.Tensor | None = None


class DiffusionLayer(nn.Module):
    """One diffusion step: edge operator phi, node operator varphi, linear update psi."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.d
        make = lambda: make_operator(  # noqa: E731
            cfg.operator, d, cfg.heads, cfg.inducing_points, cfg.mlp_depth, cfg.dropout
        )
        self.phi = make()
        self.varphi = make()
        self.psi = nn.Linear((4 if cfg.method == "GD" else 3) * d, d)
        self.cfg = cfg

    def edge_op(self, x, g: PairGraph):
        out = self.phi(x, g.pair_edge, g.m)
        return out if self.cfg.phi_equivariant else mean_ablate(out, g.pair_edge, g.m)

    def node_op(self, x, g: PairGraph):
        out = self.varphi(x, g.pair_node, g.n)
        return out if self.cfg.varphi_equivariant else mean_ablate(out, g.pair_node, g.n)


def conhd_gd_layer(state: DiffusionInfoState, g: PairGraph, layer: DiffusionLayer) -> DiffusionInfoState:
    H = state.H
    if H.shape != state.H0.shape or H.shape[0] != g.P:
        raise ValueError(f"state shape {tuple(H.shape)} does not match {g.P} pairs")
    M = layer.edge_op(H, g)
    M2 = layer.node_op(H, g)
    H_new = layer.psi(torch.cat([H, M, M2, state.H0], dim=-1))
    return DiffusionInfoState(H_new, state.H0, M, M2)


def conhd_admm_layer(state: DiffusionInfoState, g: PairGraph, layer: DiffusionLayer) -> DiffusionInfoState:
    if state.M is None or state.M2 is None:
        raise ValueError("ADMM-form layer needs the diffusion information carried from the previous layer")
    H, M, M2 = state.H, state.M, state.M2
    M_new = layer.edge_op(2 * H - M, g) + M - H
    M2_new = layer.node_op(2 * H - M2, g) + M2 - H
    H_new = layer.psi(torch.cat([M_new, M2_new, state.H0], dim=-1))
    return DiffusionInfoState(H_new, state.H0, M_new, M2_new)


class CoNHD(nn.Module):
    def __init__(self, cfg: ModelConfig, in_features: int, out_dim: int):
        super().__init__()
        self.cfg = cfg
        self.in_features = in_features
        self.out_dim = out_dim
        extra = 1 if cfg.rank_feature else 0
        self.input_proj = nn.Linear(in_features + extra, cfg.d)
        n_blocks = 1 if cfg.share_weights else cfg.layers
        self.blocks = nn.ModuleList(DiffusionLayer(cfg) for _ in range(n_blocks))
        self.head = MLP(mlp_dims(cfg.d, out_dim, cfg.d, cfg.head_depth), dropout=0.0)
        self.to(cfg.torch_dtype)

    def block(self, layer: int) -> DiffusionLayer:
        return self.blocks[0 if self.cfg.share_weights else layer]

    def initial(self, g: PairGraph, X0) -> torch.Tensor:
        x = torch.as_tensor(X0, dtype=self.cfg.torch_dtype)[g.pair_node]
        if self.cfg.rank_feature:
            x = torch.cat([x, g.rank_feature().to(x.dtype)], dim=-1)
        return self.input_proj(x)

    def embed(self, g: PairGraph, X0) -> torch.Tensor:
        """Final co-representations H^(L), one row per pair."""
        H0 = self.initial(g, X0)
        state = DiffusionInfoState(H0, H0, H0, H0)
        step = conhd_gd_layer if self.cfg.method == "GD" else conhd_admm_layer
        for layer in range(self.cfg.layers):
            state = step(state, g, self.block(layer))
        return state.H

    def forward(self, g: PairGraph, X0) -> torch.Tensor:
        return self.head(self.embed(g, X0))

    def layer_parameter_count(self) -> int:
        return sum(p.numel() for p in self.blocks.parameters())

    @torch.no_grad()
    def init_identity(self) -> None:
        """Make the network output its first input feature unchanged (eval mode).

        psi copies the h0 slot, the input projection puts (x, -x) in the
        first two channels and the head recombines relu(x) - relu(-x).
        """
        d = self.cfg.d
        if d < 2:
            raise ValueError("identity initialization needs d >= 2")
        self.input_proj.weight.zero_()
        self.input_proj.bias.zero_()
        self.input_proj.weight[0, 0] = 1.0
        self.input_proj.weight[1, 0] = -1.0
        h0_slot = (3 if self.cfg.method == "GD" else 2) * d
        for blk in self.blocks:
            blk.psi.weight.zero_()
            blk.psi.bias.zero_()
            blk.psi.weight[:, h0_slot:h0_slot + d] = torch.eye(d, dtype=blk.psi.weight.dtype)
        lins = self.head.linears
        for i, lin in enumerate(lins):
            lin.weight.zero_()
            lin.bias.zero_()
            if len(lins) == 1:
                lin.weight[:, 0] = 1.0
            elif i == 0:
                lin.weight[0, 0] = lin.weight[1, 1] = 1.0
            elif i < len(lins) - 1:
                lin.weight[0, 0] = lin.weight[1, 1] = 1.0
            else:
                lin.weight[:, 0] = 1.0
                lin.weight[:, 1] = -1.0


def conhd_forward(g: PairGraph, X0, model: CoNHD) -> torch.Tensor:
    return model.embed(g, X0)


def classify_head(model: CoNHD, H: torch.Tensor) -> torch.Tensor:
    return model.head(H)
