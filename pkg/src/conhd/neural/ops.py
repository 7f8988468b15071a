"""Permutation-equivariant set operators over many variable-size stacks at once.

Every operator takes a ``P x d`` tensor of rows plus ``seg`` (the stack id
of each row) and ``num`` (the number of stacks), so a single call handles all
edge stacks or all node stacks of a hypergraph. ``seg=None`` treats the
input as one stack.
"""

from __future__ import annotations

import math

import torch
from torch import nn


def _one_stack(x: torch.Tensor, seg, num):
    if seg is None:
        return torch.zeros(x.shape[0], dtype=torch.long, device=x.device), 1
    return seg, num


def segment_sum(x: torch.Tensor, seg: torch.Tensor, num: int) -> torch.Tensor:
    out = x.new_zeros((num,) + tuple(x.shape[1:]))
    return out.index_add(0, seg, x)


def segment_mean(x: torch.Tensor, seg: torch.Tensor, num: int) -> torch.Tensor:
    counts = torch.bincount(seg, minlength=num).clamp(min=1).to(x.dtype)
    return segment_sum(x, seg, num) / counts.view(-1, *([1] * (x.dim() - 1)))


def segment_softmax(scores: torch.Tensor, seg: torch.Tensor, num: int) -> torch.Tensor:
    """Softmax over the rows of each stack, independently for trailing dims."""
    shape = (num,) + tuple(scores.shape[1:])
    idx = seg.view(-1, *([1] * (scores.dim() - 1))).expand_as(scores)
    smax = scores.new_full(shape, -math.inf).scatter_reduce(0, idx, scores, "amax", include_self=True)
    ex = torch.exp(scores - smax[seg].detach())
    return ex / segment_sum(ex, seg, num)[seg]


class MLP(nn.Module):
    """ReLU MLP; dropout after each hidden activation."""

    def __init__(self, dims: list[int], dropout: float = 0.0):
        super().__init__()
        self.linears = nn.ModuleList(nn.Linear(a, b) for a, b in zip(dims[:-1], dims[1:]))
        self.dropout = nn.Dropout(dropout) if dropout > 0 else nn.Identity()

    def forward(self, x):
        for i, lin in enumerate(self.linears):
            x = lin(x)
            if i < len(self.linears) - 1:
                x = self.dropout(torch.relu(x))
        return x


def mlp_dims(d_in: int, d_out: int, hidden: int, depth: int) -> list[int]:
    return [d_in] + [hidden] * (depth - 1) + [d_out]


class UNB(nn.Module):
    """out_i = MLP2([s_i, sum_j MLP1(s_j)])."""

    def __init__(self, d: int, depth: int = 2, dropout: float = 0.0):
        super().__init__()
        self.inner = MLP(mlp_dims(d, d, d, depth), dropout)
        self.outer = MLP(mlp_dims(2 * d, d, d, depth), dropout)

    def forward(self, x, seg=None, num=None):
        seg, num = _one_stack(x, seg, num)
        pooled = segment_sum(self.inner(x), seg, num)
        return self.outer(torch.cat([x, pooled[seg]], dim=-1))


class MultiHead(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        if d % heads:
            raise ValueError(f"heads ({heads}) must divide d ({d})")
        self.heads, self.dh = heads, d // heads
        self.q = nn.Linear(d, d, bias=False)
        self.k = nn.Linear(d, d, bias=False)
        self.v = nn.Linear(d, d, bias=False)
        self.o = nn.Linear(d, d, bias=False)

    def split(self, x):
        return x.view(*x.shape[:-1], self.heads, self.dh)


class MAB(nn.Module):
    """LN(M + rFF(M)) with M = LN(Q + MultiHead(Q, K, K))."""

    def __init__(self, d: int, heads: int, dropout: float = 0.0):
        super().__init__()
        self.att = MultiHead(d, heads)
        self.ln1 = nn.LayerNorm(d)
        self.ln2 = nn.LayerNorm(d)
        self.ff = nn.Linear(d, d)
        self.dropout = nn.Dropout(dropout) if dropout > 0 else nn.Identity()

    def finish(self, q_in, attended):
        m = self.ln1(q_in + self.att.o(attended))
        return self.ln2(m + self.dropout(torch.relu(self.ff(m))))

    def induce(self, inducing, x, seg, num):
        """Inducing points (k x d) attend to the rows of every stack -> num x k x d."""
        a = self.att
        q = a.split(a.q(inducing))  # k, h, dh
        key, val = a.split(a.k(x)), a.split(a.v(x))  # P, h, dh
        scores = torch.einsum("phc,khc->pkh", key, q) / math.sqrt(a.dh)
        w = segment_softmax(scores, seg, num)  # P, k, h
        out = segment_sum(torch.einsum("pkh,phc->pkhc", w, val), seg, num)
        out = out.reshape(num, inducing.shape[0], -1)
        return self.finish(inducing.expand(num, -1, -1), out)

    def expand(self, x, summary, seg):
        """Each row attends to the k summary rows of its own stack -> P x d."""
        a = self.att
        q = a.split(a.q(x))  # P, h, dh
        ctx = summary[seg]  # P, k, d
        key, val = a.split(a.k(ctx)), a.split(a.v(ctx))  # P, k, h, dh
        scores = torch.einsum("phc,pkhc->pkh", q, key) / math.sqrt(a.dh)
        w = torch.softmax(scores, dim=1)
        out = torch.einsum("pkh,pkhc->phc", w, val).reshape(x.shape)
        return self.finish(x, out)


class ISAB(nn.Module):
    """ISAB(S) = MAB(S, MAB(I, S)) with k learned inducing points."""

    def __init__(self, d: int, heads: int = 4, k: int = 4, dropout: float = 0.0):
        super().__init__()
        self.inducing = nn.Parameter(torch.empty(k, d))
        nn.init.xavier_uniform_(self.inducing)
        self.mab_in = MAB(d, heads, dropout)
        self.mab_out = MAB(d, heads, dropout)

    def forward(self, x, seg=None, num=None):
        seg, num = _one_stack(x, seg, num)
        summary = self.mab_in.induce(self.inducing, x, seg, num)
        return self.mab_out.expand(x, summary, seg)


def mean_ablate(out: torch.Tensor, seg=None, num=None) -> torch.Tensor:
    """Replace every row by its stack's mean row (invariant, single-output)."""
    seg, num = _one_stack(out, seg, num)
    return segment_mean(out, seg, num)[seg]


def make_operator(kind: str, d: int, heads: int, k: int, depth: int, dropout: float) -> nn.Module:
    if kind == "UNB":
        return UNB(d, depth, dropout)
    if kind == "ISAB":
        return ISAB(d, heads, k, dropout)
    raise ValueError(f"unknown operator {kind!r}; expected UNB or ISAB")
