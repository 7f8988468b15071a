"""Losses, gradient plumbing, the Adam update, finite-difference checks and checkpoints."""

from __future__ import annotations

import json
import struct
from typing import Callable, Iterable

import numpy as np
import torch
import torch.nn.functional as F

from .model import CoNHD, ModelConfig

CHECKPOINT_MAGIC = b"CONHDCK1"


def loss_cross_entropy(logits: torch.Tensor, labels) -> torch.Tensor:
    labels = torch.as_tensor(labels, dtype=torch.long)
    C = logits.shape[-1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"labels must lie in [0, {C})")
    return F.nll_loss(torch.log_softmax(logits, dim=-1), labels)


def loss_mae(pred: torch.Tensor, target) -> torch.Tensor:
    target = torch.as_tensor(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (pred - target).abs().mean()


def backward(loss: torch.Tensor, params: Iterable[torch.nn.Parameter]) -> None:
    """Fill ``.grad`` of every parameter; parameters the loss never touched get zeros."""
    params = list(params)
    if loss.grad_fn is None:
        raise RuntimeError("backward called on a value with no recorded forward computation")
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    for p, g in zip(params, grads):
        p.grad = torch.zeros_like(p) if g is None else g


def adam_update(param, grad, m, v, lr: float, t: int, betas=(0.9, 0.999), eps: float = 1e-8):
    """Bias-corrected adaptive-moment step; returns (new_param, m, v)."""
    b1, b2 = betas
    m = b1 * m + (1 - b1) * grad
    v = b2 * v + (1 - b2) * grad * grad
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    return param - lr * m_hat / (torch.sqrt(v_hat) + eps), m, v


class Adam:
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.betas, self.eps = lr, betas, eps
        self.t = 0
        self.m = [torch.zeros_like(p) for p in self.params]
        self.v = [torch.zeros_like(p) for p in self.params]

    @torch.no_grad()
    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else torch.zeros_like(p)
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)}")
            new, self.m[i], self.v[i] = adam_update(p, g, self.m[i], self.v[i], self.lr, self.t, self.betas, self.eps)
            p.copy_(new)


def optimizer_step(opt: Adam) -> None:
    opt.step()


def finite_difference_check(
    model: torch.nn.Module, loss_fn: Callable[[], torch.Tensor], step: float = 1e-5
) -> dict[str, float]:
    """Relative error between autograd and central differences, per parameter tensor.

    error = ||g_fd - g_ad|| / max(||g_fd||, ||g_ad||, 1e-8)
    """
    params = dict(model.named_parameters())
    model.zero_grad(set_to_none=True)
    backward(loss_fn(), params.values())
    analytic = {k: p.grad.detach().clone() for k, p in params.items()}
    errors = {}
    with torch.no_grad():
        for name, p in params.items():
            flat = p.view(-1)
            fd = torch.empty_like(flat)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                up = loss_fn().item()
                flat[i] = orig - step
                down = loss_fn().item()
                flat[i] = orig
                fd[i] = (up - down) / (2 * step)
            ad = analytic[name].view(-1)
            denom = max(fd.norm().item(), ad.norm().item(), 1e-8)
            errors[name] = (fd - ad).norm().item() / denom
    return errors


def save_checkpoint(path, model: CoNHD, meta: dict | None = None) -> None:
    """Header JSON (config, names, shapes, offsets) then little-endian float64 values."""
    tensors = model.state_dict()
    entries, offset = [], 0
    for name, t in tensors.items():
        entries.append({"name": name, "shape": list(t.shape), "offset": offset})
        offset += t.numel()
    header = {
        "format": "conhd-checkpoint/1",
        "config": model.cfg.to_dict(),
        "in_features": model.in_features,
        "out_dim": model.out_dim,
        "meta": meta or {},
        "tensors": entries,
        "dtype": "<f8",
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for t in tensors.values():
            fh.write(t.detach().cpu().to(torch.float64).contiguous().numpy().astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[CoNHD, dict]:
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a CoNHD checkpoint")
        (size,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(size))
        values = np.frombuffer(fh.read(), dtype="<f8")
    cfg = ModelConfig.from_dict(header["config"])
    model = CoNHD(cfg, header["in_features"], header["out_dim"])
    state = {}
    for e in header["tensors"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = values[e["offset"]:e["offset"] + n].reshape(e["shape"])
        state[e["name"]] = torch.from_numpy(arr.copy()).to(cfg.torch_dtype)
    model.load_state_dict(state)
    return model, header.get("meta", {})
