"""Structural regularizers on stacks of co-representations, their gradients and proxes.

A *stack* is a ``rows x d`` matrix holding the co-representations that share
one edge (or one node). All regularizers are permutation invariant in the
rows, so their gradients and proximal maps are permutation equivariant.

* ``CE``   sum over ordered row pairs of ``||x_i - x_j||^2``
* ``TV2``  per column, squared range ``(max - min)^2``
* ``LEC2`` per column, squared Lovasz extension of ``w(i) = min(i, rows - i)``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

KINDS = ("CE", "TV2", "LEC2")
_KIND_CODE = {"CE": _kernels.CE, "TV2": _kernels.TV2, "LEC2": _kernels.LEC2}


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class RegularizerSpec:
    kind: str
    side: str = "edge"
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown regularizer {self.kind!r}; expected one of {KINDS}")
        if self.side not in ("edge", "node"):
            raise ValueError(f"side must be 'edge' or 'node', got {self.side!r}")
        if not self.weight >= 0:
            raise ValueError("regularizer weight must be non-negative")


def _stack(S) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim == 1:
        S = S[:, None]
    if S.ndim != 2 or S.shape[0] < 1:
        raise ValueError(f"expected a non-empty rows x d matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise FloatingPointError("stack contains non-finite entries")
    return S


def ce_value(S) -> float:
    S = _stack(S)
    centered = S - S.mean(axis=0)
    # sum_{i,j} ||s_i - s_j||^2 = 2 k sum_i ||s_i - mean||^2
    return float(2.0 * S.shape[0] * np.sum(centered**2))


def ce_gradient(S) -> np.ndarray:
    S = _stack(S)
    return 4.0 * S.shape[0] * (S - S.mean(axis=0))


def ce_prox(Y, s: float) -> np.ndarray:
    """Closed-form ``argmin_X s * CE(X) + 0.5 ||X - Y||_F^2``."""
    if not s > 0:
        raise ValueError("prox scale must be positive")
    Y = _stack(Y)
    c = 4.0 * s * Y.shape[0]
    return (Y + c * Y.mean(axis=0)) / (1.0 + c)


def tv2_value(S) -> float:
    S = _stack(S)
    return float(np.sum((S.max(axis=0) - S.min(axis=0)) ** 2))


def lec2_value(S) -> float:
    S = _stack(S)
    k = S.shape[0]
    gaps = np.diff(np.sort(S, axis=0), axis=0)
    i = np.arange(1, k)
    w = np.minimum(i, k - i)[:, None]
    return float(np.sum(np.sum(w * gaps, axis=0) ** 2))


_VALUES = {"CE": ce_value, "TV2": tv2_value, "LEC2": lec2_value}


def value(kind: str, S) -> float:
    return _VALUES[kind](S)


def prox_objective(kind: str, X, Y, s: float) -> float:
    X, Y = _stack(X), _stack(Y)
    return s * value(kind, X) + 0.5 * float(np.sum((X - Y) ** 2))


def prox_iterative(kind: str, Y, s: float, tol: float = 1e-8, max_iter: int = 2000) -> np.ndarray:
    """Prox of ``s * TV2`` or ``s * LEC2``, column by column.

    Each column reduces to ``s * g(x)^2 + 0.5 ||x - y||^2`` with ``g`` a sorted
    linear form; the optimal multiplier ``c = 2 s g(x)`` is bracketed and
    bisected, and for fixed ``c`` the prox of ``c * g`` is an isotonic fit.
    """
    if kind not in ("TV2", "LEC2"):
        raise ValueError(f"prox_iterative handles TV2/LEC2, not {kind!r}")
    if not s > 0 or not tol > 0:
        raise ValueError("prox scale and tolerance must be positive")
    Y = _stack(Y)
    rows = Y.shape[0]
    q = _kernels.cut_weights(_KIND_CODE[kind], rows)
    out = np.empty_like(Y)
    for j in range(Y.shape[1]):
        col = np.ascontiguousarray(Y[:, j])
        x, resid, it = _kernels.prox_squared_column(col, q, float(s), float(tol), int(max_iter))
        if it >= max_iter and resid > tol * max(1.0, abs(s)):
            raise ConvergenceError(f"{kind} prox did not converge in {max_iter} iterations", resid)
        out[:, j] = x
    return out


def prox(kind: str, Y, s: float, tol: float = 1e-8, max_iter: int = 2000) -> np.ndarray:
    if kind == "CE":
        return ce_prox(Y, s)
    return prox_iterative(kind, Y, s, tol=tol, max_iter=max_iter)


def prox_oracle(kind: str, Y, s: float, restarts: int = 20, steps: int = 50_000, seed: int = 0) -> np.ndarray:
    """Brute-force prox by multi-start subgradient descent. Test use only.

    Restarts differ in starting point and base step size (log-spaced), each
    run decays its step as ``1/sqrt(1 + t/1000)``; the best iterate is kept.
    """
    Y = _stack(Y)
    if Y.shape[0] > 6 or Y.shape[1] > 2:
        raise ValueError("prox_oracle is limited to 6 rows and 2 columns")
    if not s > 0:
        raise ValueError("prox scale must be positive")
    if restarts < 20 or steps < 50_000:
        raise ValueError("prox_oracle needs at least 20 restarts and 50k steps")
    rng = np.random.default_rng(seed)
    spread = float(np.std(Y)) + 1.0
    starts = Y[None] + spread * rng.standard_normal((restarts,) + Y.shape)
    starts[0] = Y
    starts[1] = Y.mean(axis=0)
    base_steps = np.logspace(-4, 0, restarts)
    best, _ = _kernels.subgradient_oracle(
        _KIND_CODE[kind], Y, float(s), starts, base_steps, int(steps), 1000.0
    )
    return best


def squared_loss_prox(y, a, c: float) -> np.ndarray:
    """Prox of ``c * 0.5 ||x - a||^2`` at ``y``: ``(y + c a) / (1 + c)``."""
    y, a = np.asarray(y, dtype=np.float64), np.asarray(a, dtype=np.float64)
    if y.shape != a.shape:
        raise ValueError(f"dimension mismatch: {y.shape} vs {a.shape}")
    if not np.all(np.asarray(c) > 0):
        raise ValueError("prox scale must be positive")
    return (y + c * a) / (1.0 + c)
