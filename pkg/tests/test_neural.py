import json
import struct

import numpy as np
import pytest
import torch

from conhd.hypergraph import Hypergraph, random_hypergraph
from conhd.neural import (
    ISAB,
    MLP,
    UNB,
    Adam,
    CoNHD,
    DiffusionInfoState,
    DiffusionLayer,
    ModelConfig,
    PairGraph,
    backward,
    classify_head,
    conhd_admm_layer,
    conhd_forward,
    conhd_gd_layer,
    finite_difference_check,
    load_checkpoint,
    loss_cross_entropy,
    loss_mae,
    mean_ablate,
    save_checkpoint,
)
from conhd.neural.training import CHECKPOINT_MAGIC, adam_update

F64 = torch.float64


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


def small_cfg(**kw):
    base = dict(d=8, heads=2, layers=2, dropout=0.0, inducing_points=3)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def graph():
    h = Hypergraph(6, [[0, 1, 2], [1, 3], [2, 3, 4, 5], [0, 5]])
    return h, PairGraph.build(h), np.random.default_rng(0).standard_normal((6, 3))


# ---- MLP -------------------------------------------------------------------


def test_mlp_identity_and_bias_rows():
    mlp = MLP([4, 4]).double()
    with torch.no_grad():
        mlp.linears[0].weight.copy_(torch.eye(4))
        mlp.linears[0].bias.zero_()
    x = torch.randn(5, 4, dtype=F64)
    assert torch.equal(mlp(x), x)
    with torch.no_grad():
        mlp.linears[0].weight.zero_()
        mlp.linears[0].bias.copy_(torch.tensor([1.0, -2.0, 0.0, 3.0]))
    assert torch.equal(mlp(x), mlp.linears[0].bias.expand(5, 4))


def test_mlp_matches_numpy_reference():
    mlp = MLP([3, 5, 2]).double().eval()
    x = torch.randn(7, 3, dtype=F64)
    W1, b1 = (t.detach().numpy() for t in (mlp.linears[0].weight, mlp.linears[0].bias))
    W2, b2 = (t.detach().numpy() for t in (mlp.linears[1].weight, mlp.linears[1].bias))
    ref = np.maximum(x.numpy() @ W1.T + b1, 0) @ W2.T + b2
    np.testing.assert_allclose(mlp(x).detach().numpy(), ref, atol=1e-12)


def test_mlp_rejects_wrong_width():
    with pytest.raises(RuntimeError):
        MLP([3, 2]).double()(torch.randn(2, 4, dtype=F64))


# ---- operators -----------------------------------------------------------


@pytest.mark.parametrize("make", [lambda: UNB(6, 2), lambda: ISAB(6, heads=2, k=3)])
def test_operator_equivariance_and_shapes(make):
    op = make().double().eval()
    for rows in range(1, 9):
        x = torch.randn(rows, 6, dtype=F64)
        perm = torch.randperm(rows)
        out = op(x)
        assert out.shape == x.shape
        assert torch.allclose(op(x[perm]), out[perm], atol=1e-12, rtol=0)


@pytest.mark.parametrize("make", [lambda: UNB(6, 2), lambda: ISAB(6, heads=2, k=3)])
def test_identical_rows_give_identical_outputs(make):
    op = make().double().eval()
    x = torch.randn(1, 6, dtype=F64).repeat(4, 1)
    out = op(x)
    assert torch.allclose(out, out[:1].expand_as(out), atol=1e-12, rtol=0)
    y = torch.cat([x[:2], torch.randn(1, 6, dtype=F64)])
    assert torch.allclose(op(y)[0], op(y)[1], atol=1e-12, rtol=0)


def test_unb_single_row():
    op = UNB(4, 2).double()
    s = torch.randn(1, 4, dtype=F64)
    expected = op.outer(torch.cat([s, op.inner(s)], dim=-1))
    assert torch.allclose(op(s), expected, atol=1e-15)


def test_segmented_call_equals_per_stack_calls():
    op = ISAB(4, heads=2, k=2).double().eval()
    x = torch.randn(7, 4, dtype=F64)
    seg = torch.tensor([0, 1, 0, 2, 1, 1, 2])
    out = op(x, seg, 3)
    for s in range(3):
        rows = (seg == s).nonzero().ravel()
        assert torch.allclose(out[rows], op(x[rows]), atol=1e-12)


def test_isab_rejects_bad_heads():
    with pytest.raises(ValueError):
        ISAB(6, heads=4)


def test_mean_ablate_examples():
    assert torch.equal(mean_ablate(torch.tensor([[1.0], [3.0]])), torch.tensor([[2.0], [2.0]]))
    one = torch.tensor([[5.0, -1.0]])
    assert torch.equal(mean_ablate(one), one)
    x = torch.randn(5, 2, dtype=F64)
    assert torch.allclose(mean_ablate(x[torch.randperm(5)]), mean_ablate(x), atol=1e-15)


# ---- layers ----------------------------------------------------------------


def _state(g, d=8):
    H = torch.randn(g.P, d, dtype=F64)
    H0 = torch.randn(g.P, d, dtype=F64)
    return DiffusionInfoState(H, H0, torch.randn(g.P, d, dtype=F64), torch.randn(g.P, d, dtype=F64))


def test_gd_layer_identity_routing(graph):
    _, g, _ = graph
    layer = DiffusionLayer(small_cfg()).double()
    with torch.no_grad():
        layer.psi.weight.zero_()
        layer.psi.bias.zero_()
        layer.psi.weight[:, :8] = torch.eye(8, dtype=F64)
    st = _state(g)
    assert torch.equal(conhd_gd_layer(st, g, layer).H, st.H)


def test_gd_layer_shapes_and_mismatch(graph):
    _, g, _ = graph
    layer = DiffusionLayer(small_cfg()).double()
    out = conhd_gd_layer(_state(g), g, layer)
    assert out.H.shape == out.M.shape == out.M2.shape == (g.P, 8)
    bad = DiffusionInfoState(torch.zeros(g.P + 1, 8, dtype=F64), torch.zeros(g.P + 1, 8, dtype=F64))
    with pytest.raises(ValueError):
        conhd_gd_layer(bad, g, layer)


def test_ablation_broadcasts_identical_messages(graph):
    h, g, _ = graph
    layer = DiffusionLayer(small_cfg(phi_equivariant=False, varphi_equivariant=False)).double()
    out = conhd_gd_layer(_state(g), g, layer)
    pe, pn = g.pair_edge.numpy(), g.pair_node.numpy()
    for e in range(h.m):
        rows = np.flatnonzero(pe == e)
        assert torch.allclose(out.M[rows], out.M[rows[:1]].expand(len(rows), -1), atol=1e-14)
    for v in range(h.n):
        rows = np.flatnonzero(pn == v)
        assert torch.allclose(out.M2[rows], out.M2[rows[:1]].expand(len(rows), -1), atol=1e-14)


class _Identity(torch.nn.Module):
    def forward(self, x, seg=None, num=None):
        return x


def test_admm_layer_fixed_point_form(graph):
    _, g, _ = graph
    layer = DiffusionLayer(small_cfg(method="ADMM")).double()
    layer.phi, layer.varphi = _Identity(), _Identity()
    H = torch.randn(g.P, 8, dtype=F64)
    out = conhd_admm_layer(DiffusionInfoState(H, H, H, H), g, layer)
    assert torch.allclose(out.M, H) and torch.allclose(out.M2, H)
    assert out.H.shape == (g.P, 8)


def test_admm_layer_needs_carried_state(graph):
    _, g, _ = graph
    layer = DiffusionLayer(small_cfg(method="ADMM")).double()
    H = torch.zeros(g.P, 8, dtype=F64)
    with pytest.raises(ValueError):
        conhd_admm_layer(DiffusionInfoState(H, H), g, layer)


# ---- full model --------------------------------------------------------------


def test_one_layer_model_is_one_layer_call(graph):
    _, g, X0 = graph
    model = CoNHD(small_cfg(layers=1), 3, 2)
    H0 = model.initial(g, X0)
    layer_out = conhd_gd_layer(DiffusionInfoState(H0, H0, H0, H0), g, model.block(0)).H
    assert torch.equal(conhd_forward(g, X0, model), layer_out)


def test_weight_sharing_parameter_counts():
    counts = {L: CoNHD(small_cfg(layers=L), 3, 2).layer_parameter_count() for L in (1, 2, 5)}
    assert counts[1] == counts[2] == counts[5]
    c = counts[1]
    assert CoNHD(small_cfg(layers=3, share_weights=False), 3, 2).layer_parameter_count() == 3 * c


def test_unshared_forward_is_finite(graph):
    _, g, X0 = graph
    out = CoNHD(small_cfg(layers=3, share_weights=False, operator="ISAB"), 3, 2)(g, X0)
    assert torch.isfinite(out).all()


@pytest.mark.parametrize("method", ["GD", "ADMM"])
def test_identity_initialization(graph, method):
    _, g, X0 = graph
    model = CoNHD(small_cfg(method=method), 1, 1).eval()
    model.init_identity()
    x = X0[:, :1]
    assert torch.allclose(model(g, x), torch.as_tensor(x)[g.pair_node], atol=1e-14)


def test_rank_feature_flag(graph):
    _, g, X0 = graph
    model = CoNHD(small_cfg(rank_feature=True), 3, 2)
    assert model.input_proj.in_features == 4
    r = g.rank_feature()
    assert r.shape == (g.P, 1) and float(r.min()) == 0.0 and float(r.max()) == 1.0
    assert torch.isfinite(model(g, X0)).all()


def test_classify_head_properties():
    model = CoNHD(small_cfg(), 3, 4).eval()
    H = torch.randn(5, 8, dtype=F64)
    last = model.head.linears[-1]
    lin0 = model.head.linears[0]
    ref = torch.relu(H @ lin0.weight.T + lin0.bias) @ last.weight.T + last.bias
    assert torch.allclose(classify_head(model, H), ref, atol=1e-12)
    H2 = H.clone()
    H2[2] += 1.0
    diff = (classify_head(model, H2) - classify_head(model, H)).abs().sum(dim=1)
    assert diff[2] > 0 and torch.all(diff[[0, 1, 3, 4]] == 0)
    with torch.no_grad():
        last.weight.zero_()
        last.bias.zero_()
    probs = torch.softmax(classify_head(model, H), dim=-1)
    assert torch.allclose(probs, torch.full_like(probs, 0.25))


@pytest.mark.parametrize("kw", [dict(operator="GCN"), dict(method="SGD"), dict(d=0), dict(d=6, heads=4),
                                dict(dtype="float16"), dict(layers=0)])
def test_model_config_validation(kw):
    with pytest.raises(ValueError):
        small_cfg(**kw)


def test_model_config_dict_round_trip():
    cfg = small_cfg(operator="ISAB")
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError, match="unknown"):
        ModelConfig.from_dict({"d": 8, "width": 3})


def test_defaults_follow_reference_settings():
    cfg = ModelConfig()
    assert (cfg.d, cfg.inducing_points, cfg.dropout, cfg.neighbor_sample) == (128, 4, 0.7, 40)


def test_model_equivariance_under_relabelling(graph):
    from conhd.hypergraph import permuted

    h, g, X0 = graph
    rng = np.random.default_rng(3)
    for op in ("UNB", "ISAB"):
        for method in ("GD", "ADMM"):
            model = CoNHD(small_cfg(operator=op, method=method), 3, 2).eval()
            base = model(g, X0)
            for _ in range(5):
                h2, pmap, node_perm = permuted(h, rng)
                X2 = np.empty_like(X0)
                X2[node_perm] = X0
                out = model(PairGraph.build(h2), X2)
                assert torch.allclose(out, base[torch.as_tensor(pmap)], atol=1e-10, rtol=0)


def test_dropout_is_seeded(graph):
    _, g, X0 = graph
    model = CoNHD(small_cfg(dropout=0.5), 3, 2).train()
    torch.manual_seed(5)
    a = model(g, X0)
    torch.manual_seed(5)
    b = model(g, X0)
    assert torch.equal(a, b)
    model.eval()
    assert torch.equal(model(g, X0), model(g, X0))


# ---- losses, backward, optimizer -------------------------------------------------


def test_losses():
    logits = torch.tensor([[50.0, -50.0], [-50.0, 50.0]], dtype=F64)
    assert float(loss_cross_entropy(logits, [0, 1])) < 1e-6
    with pytest.raises(ValueError):
        loss_cross_entropy(logits, [0, 2])
    x = torch.tensor([[0.0], [2.0]], dtype=F64)
    assert float(loss_mae(x, x)) == 0.0
    assert float(loss_mae(x, torch.ones(2, 1, dtype=F64))) == 1.0
    with pytest.raises(ValueError):
        loss_mae(x, torch.ones(3, 1))


def test_cross_entropy_is_stable_for_huge_logits():
    logits = torch.tensor([[1e4, 0.0, -1e4]], dtype=F64)
    assert torch.isfinite(loss_cross_entropy(logits, [2]))


def test_backward_examples():
    W = torch.nn.Parameter(torch.randn(3, 2, dtype=F64))
    unused = torch.nn.Parameter(torch.randn(2, dtype=F64))
    backward(0.5 * (W**2).sum(), [W, unused])
    assert torch.equal(W.grad, W.detach())
    assert torch.equal(unused.grad, torch.zeros(2, dtype=F64))
    with pytest.raises(RuntimeError):
        backward(torch.tensor(1.0), [W])


def test_backward_is_deterministic(graph):
    _, g, X0 = graph
    grads = []
    for _ in range(2):
        torch.manual_seed(1)
        model = CoNHD(small_cfg(operator="ISAB"), 3, 2)
        backward(model(g, X0).square().mean(), list(model.parameters()))
        grads.append([p.grad.clone() for p in model.parameters()])
    assert all(torch.equal(a, b) for a, b in zip(*grads))


def test_optimizer_examples():
    p = torch.nn.Parameter(torch.tensor([1.0, -1.0], dtype=F64))
    opt = Adam([p], lr=0.1)
    p.grad = torch.zeros(2, dtype=F64)
    opt.step()
    assert torch.equal(p.detach(), torch.tensor([1.0, -1.0], dtype=F64))
    opt = Adam([p], lr=0.1)
    start = p.detach().clone()
    for _ in range(20):
        p.grad = torch.tensor([3.0, -0.5], dtype=F64)
        before = p.detach().clone()
        opt.step()
        assert torch.all((p.detach() - before).abs() <= 0.1 * (1 + 1e-6))
    assert p[0] < start[0] and p[1] > start[1]
    with pytest.raises(RuntimeError):
        p.grad = torch.zeros(3, dtype=F64)


def test_adam_first_step_is_lr_times_sign():
    new, _, _ = adam_update(torch.tensor([0.0]), torch.tensor([-7.0]), torch.zeros(1), torch.zeros(1), 0.01, 1)
    assert float(new) == pytest.approx(0.01, rel=1e-6)


@pytest.mark.parametrize("op, layers", [("UNB", 2), ("ISAB", 1)])
@pytest.mark.parametrize("method", ["GD", "ADMM"])
def test_finite_differences(op, layers, method):
    h = random_hypergraph(7, 5, (2, 4), seed=11)
    g = PairGraph.build(h)
    X0 = np.random.default_rng(0).standard_normal((7, 2))
    model = CoNHD(small_cfg(d=4, operator=op, layers=layers, method=method, share_weights=False), 2, 1).eval()
    target = torch.randn(g.P, 1, dtype=F64)
    errs = finite_difference_check(model, lambda: ((model(g, X0) - target) ** 2).mean())
    assert set(errs) == {n for n, _ in model.named_parameters()}
    assert max(errs.values()) <= 1e-4


# ---- checkpoints -------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path, graph):
    _, g, X0 = graph
    model = CoNHD(small_cfg(operator="ISAB", method="ADMM"), 3, 2).eval()
    save_checkpoint(tmp_path / "m.ckpt", model, {"note": "x"})
    back, meta = load_checkpoint(tmp_path / "m.ckpt")
    assert meta == {"note": "x"}
    assert back.cfg == model.cfg
    assert torch.equal(back.eval()(g, X0), model(g, X0))


def test_checkpoint_layout(tmp_path):
    model = CoNHD(small_cfg(), 3, 2)
    save_checkpoint(tmp_path / "m.ckpt", model)
    raw = (tmp_path / "m.ckpt").read_bytes()
    assert raw[:8] == CHECKPOINT_MAGIC
    (size,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + size])
    assert header["dtype"] == "<f8" and header["config"]["d"] == 8
    first = header["tensors"][0]
    values = np.frombuffer(raw[16 + size:], dtype="<f8")
    expected = model.state_dict()[first["name"]].detach().numpy().ravel()
    np.testing.assert_array_equal(values[: expected.size], expected)
    assert values.size == sum(t.numel() for t in model.state_dict().values())


def test_checkpoint_rejects_foreign_file(tmp_path):
    (tmp_path / "x.ckpt").write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x.ckpt")
