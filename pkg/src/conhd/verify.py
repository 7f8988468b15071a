"""Executable correctness suites behind ``conhd check``.

Each suite returns a :class:`CheckResult` with the largest deviation it
measured and the tolerance it was held to. Numerical kernels are passed in
as arguments so tests can inject broken versions and watch a suite fail.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from . import regularizers as reg
from .diffusion import (
    DiffusionConfig,
    admm_step,
    gd_step,
    init_state,
    node_rep_diffusion,
    run_diffusion,
    solve_ce_stationary,
)
from .hypergraph import PairIndex, permuted, random_hypergraph
from .neural.model import CoNHD, ModelConfig, PairGraph
from .neural.ops import ISAB, UNB
from .neural.training import finite_difference_check


@dataclass
class CheckResult:
    name: str
    max_deviation: float
    tolerance: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _result(name, dev, tol, detail=None, passed=None):
    dev = float(dev)
    ok = bool(dev <= tol) if passed is None else bool(passed)
    return CheckResult(name, dev, float(tol), ok and np.isfinite(dev), detail or {})


def small_instance(rng: np.random.Generator, n=(4, 9), m=(2, 6), size=(2, 4), dim: int = 1):
    """A random hypergraph with every node in at least one edge, plus anchors."""
    while True:
        nn_ = int(rng.integers(n[0], n[1] + 1))
        mm = int(rng.integers(m[0], m[1] + 1))
        h = random_hypergraph(nn_, mm, (size[0], min(size[1], nn_)), seed=int(rng.integers(2**31)))
        if np.all(h.node_degree > 0):
            idx = PairIndex(h)
            return h, idx, rng.standard_normal((idx.P, dim))


# ---------------------------------------------------------------------------
# regularizers


def check_prox(instances=200, scales=(0.1, 1.0, 10.0), seed=0, ce_prox=reg.ce_prox, prox_iterative=reg.prox_iterative):
    """ce_prox vs the brute-force oracle; TV2/LEC2 prox objective never above the oracle's."""
    rng = np.random.default_rng(seed)
    ce_dev, tv_excess = 0.0, -np.inf
    for i in range(instances):
        rows = int(rng.integers(1, 6))
        Y = rng.standard_normal((rows, 1)) * rng.uniform(0.5, 3.0)
        s = float(scales[i % len(scales)])
        kind = ("CE", "TV2", "LEC2")[i % 3]
        oracle = reg.prox_oracle(kind, Y, s, seed=int(rng.integers(2**31)))
        if kind == "CE":
            ce_dev = max(ce_dev, float(np.max(np.abs(ce_prox(Y, s) - oracle))))
        else:
            mine = reg.prox_objective(kind, prox_iterative(kind, Y, s), Y, s)
            tv_excess = max(tv_excess, mine - reg.prox_objective(kind, oracle, Y, s))
    return [
        _result("prox_ce_vs_oracle", ce_dev, 1e-4, {"instances": -(-instances // 3)}),
        _result("prox_tv_lec_objective_excess", max(tv_excess, 0.0), 1e-6, {"signed_excess": float(tv_excess)}),
    ]


def check_ce_gradient(instances=20, step=1e-6, seed=0, ce_gradient=reg.ce_gradient, ce_value=reg.ce_value):
    """ce_gradient vs central differences of ce_value."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        S = rng.standard_normal((int(rng.integers(2, 6)), int(rng.integers(1, 3))))
        fd = np.zeros_like(S)
        for i in np.ndindex(S.shape):
            up, down = S.copy(), S.copy()
            up[i] += step
            down[i] -= step
            fd[i] = (ce_value(up) - ce_value(down)) / (2 * step)
        g = np.asarray(ce_gradient(S))
        worst = max(worst, float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8)))
    return [_result("ce_gradient_finite_difference", worst, 1e-6)]


# ---------------------------------------------------------------------------
# classical diffusion


def check_gd_monotone(instances=200, steps=100, alpha=0.01, slack=1e-10, seed=0):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(instances):
        h, idx, A = small_instance(rng, dim=int(rng.integers(1, 3)))
        cfg = DiffusionConfig(method="GD", alpha=alpha, steps=steps)
        obj = np.asarray(run_diffusion(h, idx, A, cfg).objectives)
        worst = max(worst, float(np.max(np.diff(obj))))
    return [_result("gd_objective_monotone", max(worst, 0.0), slack, {"largest_increase": float(worst)})]


def check_solver_agreement(instances=20, seed=0):
    """ADMM and GD against each other and against the direct CE solve."""
    rng = np.random.default_rng(seed)
    between = direct = 0.0
    for _ in range(instances):
        h, idx, A = small_instance(rng)
        lam, gamma = rng.uniform(0.1, 1.0, size=2)
        admm = run_diffusion(h, idx, A, DiffusionConfig(method="ADMM", rho=1.0, lam=lam, gamma=gamma, steps=500))
        gd = run_diffusion(h, idx, A, DiffusionConfig(method="GD", alpha=0.005, lam=lam, gamma=gamma, steps=5000))
        exact = solve_ce_stationary(idx, A, lam, gamma)
        Ha, Hg = admm.final.H, gd.final.H
        between = max(between, float(np.max(np.abs(Ha - Hg))))
        direct = max(direct, float(np.max(np.abs(Ha - exact))), float(np.max(np.abs(Hg - exact))))
    return [
        _result("admm_vs_gd", between, 1e-3),
        _result("solvers_vs_direct_solve", direct, 1e-4),
    ]


def node_spread(H, idx: PairIndex) -> float:
    """Largest distance of a co-representation from its node's mean."""
    B = idx.node_incidence
    deg = np.maximum(np.asarray(B.sum(axis=1)).ravel(), 1)
    means = (B @ H) / deg[:, None]
    return float(np.max(np.abs(H - means[idx.pair_node])))


def node_means(H, idx: PairIndex) -> np.ndarray:
    B = idx.node_incidence
    deg = np.maximum(np.asarray(B.sum(axis=1)).ravel(), 1)
    return (B @ H) / deg[:, None]


def check_node_rep_limit(instances=10, gammas=(1e2, 1e3, 1e4), lam=0.5, seed=0):
    """A CE node regularizer with large weight collapses co-rep to node-rep diffusion.

    Pair weights are ``1/d_v`` so each node's fitting term sums to one copy
    of ``1/2 ||x_v - x0_v||^2``.
    """
    rng = np.random.default_rng(seed)
    increase, mean_dev = -np.inf, 0.0
    spreads = []
    for _ in range(instances):
        h, idx, _ = small_instance(rng)
        X0 = rng.standard_normal((h.n, 1))
        A = X0[idx.pair_node]
        w = 1.0 / h.node_degree[idx.pair_node]
        row = [node_spread(solve_ce_stationary(idx, A, lam, g, w), idx) for g in gammas]
        spreads.append(row)
        increase = max(increase, float(np.max(np.diff(row))))
        H = solve_ce_stationary(idx, A, lam, gammas[-1], w)
        alpha = 0.5 / (1.0 + 8.0 * lam * max(h.edge_degree) * max(h.node_degree))
        X = node_rep_diffusion(h, X0, DiffusionConfig(alpha=alpha, lam=lam, steps=200_000), idx, rel_tol=1e-15)
        mean_dev = max(mean_dev, float(np.max(np.abs(node_means(H, idx) - X))))
    return [
        _result("node_limit_spread_nonincreasing", max(increase, 0.0), 0.0, {"spreads": spreads}),
        _result("node_limit_matches_node_rep", mean_dev, 1e-2),
    ]


def _classical_step(h, idx, A, cfg):
    state = init_state(A, cfg.method)
    step = gd_step if cfg.method == "GD" else admm_step
    for _ in range(cfg.steps):
        state = step(state, h, idx, cfg)
    return state.H


def check_classical_equivariance(permutations=100, seed=0, configs=None):
    """Diffusion steps commute with relabelling nodes, edges and members."""
    rng = np.random.default_rng(seed)
    configs = configs or [
        DiffusionConfig(method="GD", alpha=0.05, steps=3),
        DiffusionConfig(method="ADMM", rho=1.0, steps=3),
        DiffusionConfig(method="ADMM", rho=0.5, edge_reg="TV2", node_reg="LEC2", steps=2),
    ]
    worst = 0.0
    h, idx, A = small_instance(rng, n=(7, 9), m=(4, 6), size=(2, 5), dim=2)
    base = [_classical_step(h, idx, A, c) for c in configs]
    for _ in range(permutations):
        h2, pmap, _ = permuted(h, rng)
        idx2 = PairIndex(h2)
        for cfg, out in zip(configs, base):
            worst = max(worst, float(np.max(np.abs(_classical_step(h2, idx2, A[pmap], cfg) - out[pmap]))))
    return [_result("classical_equivariance", worst, 1e-10, {"permutations": permutations})]


# ---------------------------------------------------------------------------
# neural


def _toy_graph(seed):
    rng = np.random.default_rng(seed)
    h, _, _ = small_instance(rng, n=(7, 9), m=(4, 6), size=(2, 5))
    return h, rng.standard_normal((h.n, 3))


def check_neural_equivariance(permutations=100, seed=0, d=8):
    h, X0 = _toy_graph(seed)
    g = PairGraph.build(h)
    rng = np.random.default_rng(seed + 1)
    worst = {}
    models = {}
    for op in ("UNB", "ISAB"):
        torch.manual_seed(seed)
        models[f"{op}_operator"] = (UNB(d, depth=2) if op == "UNB" else ISAB(d, heads=2, k=3)).double().eval()
        for method in ("GD", "ADMM"):
            torch.manual_seed(seed)
            cfg = ModelConfig(operator=op, d=d, heads=2, layers=2, method=method, dropout=0.0)
            models[f"{op}_{method}_model"] = CoNHD(cfg, X0.shape[1], 2).eval()
    x = torch.randn(g.P, d, dtype=torch.float64)
    with torch.no_grad():
        base = {}
        for name, m in models.items():
            base[name] = m(x, g.pair_edge, g.m) if name.endswith("operator") else m(g, X0)
        for _ in range(permutations):
            h2, pmap, node_perm = permuted(h, rng)
            g2 = PairGraph.build(h2)
            X2 = np.empty_like(X0)
            X2[node_perm] = X0
            p = torch.as_tensor(pmap)
            for name, m in models.items():
                out = m(x[p], g2.pair_edge, g2.m) if name.endswith("operator") else m(g2, X2)
                dev = float((out - base[name][p]).abs().max())
                worst[name] = max(worst.get(name, 0.0), dev)
    return [_result("neural_equivariance", max(worst.values()), 1e-10, {"per_model": worst})]


def check_model_gradients(seed=0, step=1e-5, tol=1e-4):
    """Central differences on every parameter tensor of a 2-layer UNB and a 1-layer ISAB model."""
    rng = np.random.default_rng(seed)
    while True:
        h = random_hypergraph(7, 5, (2, 4), seed=int(rng.integers(2**31)))
        if np.all(h.node_degree > 0):
            break
    g = PairGraph.build(h)
    X0 = rng.standard_normal((h.n, 2))
    target = torch.as_tensor(rng.standard_normal((g.P, 1)))
    out = []
    for op, layers, share in (("UNB", 2, False), ("ISAB", 1, True)):
        for method in ("GD", "ADMM"):
            torch.manual_seed(seed)
            cfg = ModelConfig(operator=op, d=4, heads=2, layers=layers, method=method,
                              share_weights=share, dropout=0.0, inducing_points=2)
            model = CoNHD(cfg, 2, 1).eval()
            # squared loss keeps the objective smooth where MAE has kinks
            errs = finite_difference_check(model, lambda: ((model(g, X0) - target) ** 2).mean(), step)
            worst = max(errs, key=errs.get)
            out.append(_result(f"gradient_{op}_{method}_L{layers}", errs[worst], tol, {"worst_tensor": worst}))
    return out


# ---------------------------------------------------------------------------


SUITES = {
    "equivariance": lambda o: check_classical_equivariance(o["permutations"], o["seed"])
    + check_neural_equivariance(o["permutations"], o["seed"]),
    "prox": lambda o: check_prox(o["prox_instances"], seed=o["seed"]),
    "ce_gradient": lambda o: check_ce_gradient(seed=o["seed"]),
    "gd_monotone": lambda o: check_gd_monotone(o["monotone_instances"], seed=o["seed"]),
    "solver_agreement": lambda o: check_solver_agreement(o["agreement_instances"], seed=o["seed"]),
    "node_limit": lambda o: check_node_rep_limit(o["node_limit_instances"], seed=o["seed"]),
    "gradients": lambda o: check_model_gradients(seed=o["seed"]),
}

CHECK_DEFAULTS = {
    "suites": list(SUITES),
    "permutations": 20,
    "prox_instances": 30,
    "monotone_instances": 20,
    "agreement_instances": 5,
    "node_limit_instances": 3,
}


def run_checks(options: dict, suites: dict | None = None) -> dict:
    """Run the selected suites; the report lists every check and an overall flag."""
    suites = suites or SUITES
    checks = []
    for name in options["suites"]:
        if name not in suites:
            raise KeyError(f"unknown check suite {name!r}; choose from {sorted(suites)}")
        for r in suites[name](options):
            checks.append({"suite": name, **r.to_dict()})
    failed = [c["name"] for c in checks if not c["passed"]]
    return {"passed": not failed, "failed": failed, "checks": checks}


__all__ = [
    "CHECK_DEFAULTS", "CheckResult", "SUITES", "check_ce_gradient", "check_classical_equivariance",
    "check_gd_monotone", "check_model_gradients", "check_neural_equivariance", "check_node_rep_limit",
    "check_prox", "check_solver_agreement", "node_means", "node_spread", "run_checks",
    "small_instance",
]
