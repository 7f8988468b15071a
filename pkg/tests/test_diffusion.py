import numpy as np
import pytest

from conhd.diffusion import (
    SEMISYNTHETIC,
    CoRepState,
    DiffusionConfig,
    DiffusionError,
    admm_step,
    ce_system,
    gd_step,
    generate_semisynthetic,
    init_state,
    node_rep_diffusion,
    objective,
    read_semisynthetic_sample,
    run_diffusion,
    solve_ce_stationary,
    write_semisynthetic_sample,
)
from conhd.hypergraph import Hypergraph, PairIndex, random_hypergraph
from conhd.verify import small_instance

CE_BOTH = DiffusionConfig(method="GD", alpha=0.1, lam=1.0, gamma=1.0)


def test_objective_examples(pair_edge):
    h, idx = pair_edge
    A = np.array([[1.0], [0.0]])
    assert objective(init_state(A), h, idx, CE_BOTH) == pytest.approx(2.0)
    const = np.ones((2, 1))
    assert objective(init_state(const), h, idx, CE_BOTH) == 0.0
    state = CoRepState(A + 0.5, A, None, None)
    off = DiffusionConfig(lam=0.0, gamma=0.0)
    assert objective(state, h, idx, off) == pytest.approx(0.5 * 2 * 0.25)


def test_objective_rejects_shape_mismatch(pair_edge):
    h, idx = pair_edge
    with pytest.raises(DiffusionError):
        objective(init_state(np.zeros((3, 1))), h, idx, CE_BOTH)


def test_gd_step_example(pair_edge):
    h, idx = pair_edge
    cfg = DiffusionConfig(method="GD", alpha=0.1, lam=1.0, gamma=0.0)
    out = gd_step(init_state(np.array([[1.0], [0.0]])), h, idx, cfg)
    np.testing.assert_allclose(out.H, [[0.6], [0.4]], atol=1e-15)


def test_gd_step_fixed_point_and_rejections(pair_edge):
    h, idx = pair_edge
    const = init_state(np.full((2, 2), 3.0))
    np.testing.assert_array_equal(gd_step(const, h, idx, CE_BOTH).H, const.H)
    with pytest.raises(DiffusionError):
        gd_step(const, h, idx, DiffusionConfig(method="GD", edge_reg="TV2"))


def test_admm_step_example(pair_edge):
    h, idx = pair_edge
    cfg = DiffusionConfig(method="ADMM", rho=1.0, lam=1.0, gamma=1.0)
    out = admm_step(init_state(np.array([[1.0], [0.0]]), "ADMM"), h, idx, cfg)
    np.testing.assert_allclose(out.U, [[5 / 9], [4 / 9]], atol=1e-15)


@pytest.mark.parametrize("kinds", [("CE", "CE"), ("TV2", "LEC2")])
def test_admm_fixed_point(kinds):
    h = random_hypergraph(6, 4, (2, 3), seed=2)
    idx = PairIndex(h)
    state = init_state(np.full((idx.P, 2), -1.25), "ADMM")
    cfg = DiffusionConfig(method="ADMM", edge_reg=kinds[0], node_reg=kinds[1])
    out = admm_step(state, h, idx, cfg)
    for a, b in ((out.H, state.H), (out.U, state.U), (out.Z, state.Z)):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_admm_needs_auxiliaries(pair_edge):
    h, idx = pair_edge
    with pytest.raises(DiffusionError):
        admm_step(init_state(np.zeros((2, 1)), "GD"), h, idx, DiffusionConfig(method="ADMM"))


def test_admm_and_gd_reach_the_direct_solution():
    rng = np.random.default_rng(0)
    h = random_hypergraph(10, 8, (2, 4), seed=5)
    idx = PairIndex(h)
    A = rng.standard_normal((idx.P, 2))
    admm = run_diffusion(h, idx, A, DiffusionConfig(method="ADMM", rho=1.0, steps=500)).final.H
    gd = run_diffusion(h, idx, A, DiffusionConfig(method="GD", alpha=0.005, steps=5000)).final.H
    exact = solve_ce_stationary(idx, A, 1.0, 1.0)
    assert np.max(np.abs(admm - gd)) <= 1e-3
    assert max(np.max(np.abs(admm - exact)), np.max(np.abs(gd - exact))) <= 1e-4


@pytest.mark.parametrize("lam, gamma", [(0.0, 1.0), (1.0, 0.0)])
def test_admm_with_one_side_disabled(lam, gamma):
    rng = np.random.default_rng(1)
    h, idx, A = small_instance(rng)
    cfg = DiffusionConfig(method="ADMM", lam=lam, gamma=gamma, steps=800)
    H = run_diffusion(h, idx, A, cfg).final.H
    np.testing.assert_allclose(H, solve_ce_stationary(idx, A, lam, gamma), atol=1e-8)


def test_ce_system_matches_gradient(rng):
    h, idx, _ = small_instance(rng)
    H = rng.standard_normal((idx.P, 1))
    cfg = DiffusionConfig(method="GD", alpha=1.0, lam=0.3, gamma=0.8)
    zero = np.zeros_like(H)
    # one unit GD step from H with anchors 0 moves by exactly the gradient M H
    step = gd_step(CoRepState(H, zero, None, None), h, idx, cfg).H
    np.testing.assert_allclose(H - step, ce_system(idx, 0.3, 0.8) @ H, atol=1e-12)


def test_run_diffusion_zero_steps(pair_edge):
    h, idx = pair_edge
    A = np.array([[1.0], [0.0]])
    traj = run_diffusion(h, idx, A, DiffusionConfig(steps=0))
    assert len(traj) == 1
    np.testing.assert_array_equal(traj.final.H, A)


def test_run_diffusion_monotone_and_deterministic(rng):
    h, idx, A = small_instance(rng, dim=2)
    cfg = DiffusionConfig(method="GD", alpha=0.01, steps=100)
    a = run_diffusion(h, idx, A, cfg)
    b = run_diffusion(h, idx, A, cfg)
    assert np.all(np.diff(a.objectives) <= 1e-10)
    assert a.objectives == b.objectives
    assert np.array_equal(a.final.H, b.final.H)


def test_trajectory_csv_columns(tmp_path, rng):
    h, idx, A = small_instance(rng)
    run_diffusion(h, idx, A, DiffusionConfig(steps=3)).write_csv(tmp_path / "gd.csv")
    assert (tmp_path / "gd.csv").read_text().splitlines()[0] == "step,objective"
    cfg = DiffusionConfig(method="ADMM", edge_reg="TV2", node_reg="CE", steps=3)
    traj = run_diffusion(h, idx, A, cfg)
    traj.write_csv(tmp_path / "admm.csv")
    lines = (tmp_path / "admm.csv").read_text().splitlines()
    assert lines[0] == "step,objective,primal_residual_edge,primal_residual_node"
    assert len(lines) == 5 and len(traj.residual_edge) == 3


def test_snapshots_and_early_stop(rng):
    h, idx, A = small_instance(rng)
    traj = run_diffusion(h, idx, A, DiffusionConfig(steps=20), snapshot_every=5)
    assert sorted(traj.snapshots) == [0, 5, 10, 15, 20]
    early = run_diffusion(h, idx, A, DiffusionConfig(method="ADMM", steps=10_000), rel_tol=1e-12)
    assert early.converged_at is not None and early.converged_at < 10_000


@pytest.mark.parametrize("bad", [dict(method="SGD"), dict(alpha=0.0), dict(method="ADMM", rho=0.0),
                                 dict(steps=-1), dict(lam=-1.0), dict(edge_reg="L1")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        DiffusionConfig(**bad)


def test_node_rep_examples(pair_edge):
    h, idx = pair_edge
    X0 = np.array([[1.0], [0.0]])
    np.testing.assert_array_equal(node_rep_diffusion(h, X0, DiffusionConfig(lam=0.0, steps=50)), X0)
    X = node_rep_diffusion(h, X0, DiffusionConfig(alpha=0.01, lam=1.0, steps=5000))
    # stationarity: x - x0 + 4 (x - xbar) * 2 = 0 on the two-node edge -> x = (x0 + 8 xbar)/9 per node
    np.testing.assert_allclose(X, [[5 / 9], [4 / 9]], atol=1e-8)
    assert X.mean() == pytest.approx(0.5)


def test_node_rep_needs_ce(pair_edge):
    h, _ = pair_edge
    with pytest.raises(DiffusionError):
        node_rep_diffusion(h, np.zeros((2, 1)), DiffusionConfig(method="ADMM", edge_reg="TV2"))


def test_semisynthetic_settings():
    ce, tv, lec = SEMISYNTHETIC["CE"], SEMISYNTHETIC["TV2"], SEMISYNTHETIC["LEC2"]
    assert (ce.method, ce.alpha, ce.steps) == ("GD", 0.06, 2)
    assert (tv.method, tv.rho, lec.method, lec.rho) == ("ADMM", 0.07, "ADMM", 0.5)
    assert all(c.lam == c.gamma == 1.0 for c in (ce, tv, lec))


@pytest.mark.parametrize("kind", ["CE", "TV2", "LEC2"])
def test_semisynthetic_generation(kind, tmp_path):
    h = random_hypergraph(20, 12, (2, 5), seed=0)
    idx = PairIndex(h)
    a = generate_semisynthetic(h, idx, kind, pairs=4, seed=9)
    b = generate_semisynthetic(h, idx, kind, pairs=4, seed=9)
    assert len(a) == 4
    for (H0, H2), (G0, G2) in zip(a, b):
        assert H0.shape == H2.shape == (idx.P, 1)
        assert np.array_equal(H0, G0) and np.array_equal(H2, G2)
        # H0 is broadcast from node features
        for v in range(h.n):
            rows = idx.node_slice(v)
            assert rows.size == 0 or np.ptp(H0[rows]) == 0
    write_semisynthetic_sample(tmp_path / "s.csv", *a[0])
    back = read_semisynthetic_sample(tmp_path / "s.csv")
    assert np.array_equal(back[0], a[0][0]) and np.array_equal(back[1], a[0][1])


@pytest.mark.parametrize("kind", ["CE", "TV2", "LEC2"])
def test_constant_features_do_not_move(kind):
    h = random_hypergraph(8, 5, (2, 4), seed=1)
    idx = PairIndex(h)
    cfg = SEMISYNTHETIC[kind]
    H0 = np.full((idx.P, 1), 2.5)
    np.testing.assert_allclose(run_diffusion(h, idx, H0, cfg).final.H, H0, atol=1e-12)


def test_weighted_fit_term(pair_edge):
    h, idx = pair_edge
    A = np.array([[1.0], [0.0]])
    w = np.array([2.0, 0.5])
    state = CoRepState(A + 1.0, A, None, None, weights=w)
    assert objective(state, h, idx, DiffusionConfig(lam=0.0, gamma=0.0)) == pytest.approx(0.5 * 2.5)


def test_objective_on_disconnected_instance():
    h = Hypergraph(3, [[0, 1]])  # node 2 isolated: no pairs, no stack
    idx = PairIndex(h)
    state = init_state(np.array([[1.0], [1.0]]))
    assert objective(state, h, idx, CE_BOTH) == 0.0
