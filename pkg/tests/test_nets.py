import numpy as np
import pytest

from ppforge.nets import (
    Adam, MlpSpec, clip_grad_norm, elu, elu_d1, elu_d2, gaussian_entropy,
    gaussian_log_prob, gaussian_sample, init_mlp, load_checkpoint,
    mlp_backward, mlp_forward, mlp_input_grad, penalty_and_grads,
    save_checkpoint,
)


# ---- activations ---------------------------------------------------------------

def test_elu_definition_points():
    assert elu(0.0) == 0.0
    assert elu(1.0) == 1.0
    assert elu(-1.0) == np.expm1(-1.0)
    assert elu_d1(0.0) == 1.0          # continuous first derivative
    assert elu_d1(2.0) == 1.0
    assert elu_d1(-2.0) == np.exp(-2.0)
    assert elu_d2(3.0) == 0.0
    assert elu_d2(-1.0) == np.exp(-1.0)


# ---- forward -------------------------------------------------------------------

def test_spec_layout_and_validation():
    spec = MlpSpec([3, 5, 4, 2])
    assert spec.size == (5 * 3 + 5) + (4 * 5 + 4) + (2 * 4 + 2)
    assert spec.n_layers == 3
    with pytest.raises(ValueError):
        MlpSpec([4])
    with pytest.raises(ValueError):
        MlpSpec([4, 0, 2])
    with pytest.raises(ValueError):
        spec.unpack(np.zeros(spec.size + 1))


def test_zero_weights_output_is_bias():
    spec = MlpSpec([3, 2, 1])
    params = np.zeros(spec.size)
    params[-1] = 0.7   # output bias
    y, _ = mlp_forward(spec, params, np.array([[5.0, -2.0, 0.3]]))
    assert y.shape == (1, 1)
    assert y[0, 0] == 0.7


def test_one_one_one_hand_computed():
    spec = MlpSpec([1, 1, 1])
    params = np.array([2.0, 0.5, -3.0, 0.25])  # w1, b1, w2, b2
    y_neg, _ = mlp_forward(spec, params, np.array([[-1.0]]))
    a1 = np.expm1(2.0 * -1.0 + 0.5)
    assert y_neg[0, 0] == pytest.approx(-3.0 * a1 + 0.25, abs=1e-12)
    y_pos, _ = mlp_forward(spec, params, np.array([[1.0]]))
    assert y_pos[0, 0] == pytest.approx(-3.0 * 2.5 + 0.25, abs=1e-12)


def test_init_mlp_orthogonal_rows_zero_bias():
    spec = MlpSpec([8, 4])
    params = init_mlp(np.random.default_rng(0), spec)
    (w, b), = spec.unpack(params)
    assert np.allclose(w @ w.T, np.eye(4), atol=1e-9)
    assert np.array_equal(b, np.zeros(4))
    again = init_mlp(np.random.default_rng(0), spec)
    assert np.array_equal(params, again)


# ---- backward ------------------------------------------------------------------

def fd_param_grad(spec, params, x, gy, eps=1e-6):
    def loss(p):
        y, _ = mlp_forward(spec, p, x)
        return float((gy * y).sum())

    g = np.empty(spec.size)
    for j in range(spec.size):
        up = params.copy()
        dn = params.copy()
        up[j] += eps
        dn[j] -= eps
        g[j] = (loss(up) - loss(dn)) / (2 * eps)
    return g


def test_backward_matches_central_differences():
    rng = np.random.default_rng(3)
    spec = MlpSpec([3, 5, 4, 2])
    params = init_mlp(rng, spec) + 0.05 * rng.standard_normal(spec.size)
    x = rng.standard_normal((4, 3))
    gy = rng.standard_normal((4, 2))
    _, cache = mlp_forward(spec, params, x)
    got, gx = mlp_backward(spec, cache, gy)
    want = fd_param_grad(spec, params, x, gy)
    denom = np.maximum(np.abs(want), 1e-3)
    assert np.max(np.abs(got - want) / denom) < 1e-5
    # input gradient against the same oracle
    for j in range(3):
        up = x.copy()
        dn = x.copy()
        up[:, j] += 1e-6
        dn[:, j] -= 1e-6
        yu, _ = mlp_forward(spec, params, up)
        yd, _ = mlp_forward(spec, params, dn)
        fd = ((gy * yu).sum(axis=1) - (gy * yd).sum(axis=1)) / 2e-6
        assert np.allclose(gx[:, j], fd, atol=1e-5)


def test_backward_is_linear_in_gy():
    rng = np.random.default_rng(1)
    spec = MlpSpec([2, 3, 1])
    params = init_mlp(rng, spec)
    x = rng.standard_normal((5, 2))
    gy = rng.standard_normal((5, 1))
    _, cache = mlp_forward(spec, params, x)
    g1, _ = mlp_backward(spec, cache, gy)
    g2, _ = mlp_backward(spec, cache, 2.0 * gy)
    assert np.array_equal(g2, 2.0 * g1)
    g0, gx0 = mlp_backward(spec, cache, np.zeros_like(gy))
    assert np.array_equal(g0, np.zeros(spec.size))
    assert np.array_equal(gx0, np.zeros((5, 2)))


def test_linear_net_input_grad_is_weight_row():
    spec = MlpSpec([4, 1])
    rng = np.random.default_rng(5)
    params = rng.standard_normal(spec.size)
    (w, _), = spec.unpack(params)
    x = rng.standard_normal((6, 4))
    _, cache = mlp_forward(spec, params, x)
    g = mlp_input_grad(cache)
    assert np.array_equal(g, np.tile(w[0], (6, 1)))


def test_input_grad_requires_scalar_output():
    spec = MlpSpec([3, 2])
    _, cache = mlp_forward(spec, np.zeros(spec.size), np.zeros((1, 3)))
    with pytest.raises(ValueError, match="scalar"):
        mlp_input_grad(cache)


def test_penalty_gradient_matches_central_differences():
    rng = np.random.default_rng(8)
    spec = MlpSpec([3, 6, 5, 1])
    params = init_mlp(rng, spec) + 0.05 * rng.standard_normal(spec.size)
    x = rng.standard_normal((4, 3))
    for unsquared in (False, True):
        pen, got = penalty_and_grads(spec, params, x, unsquared=unsquared)

        def val(p):
            v, _ = penalty_and_grads(spec, p, x, unsquared=unsquared)
            return v

        eps = 1e-6
        want = np.empty(spec.size)
        for j in range(spec.size):
            up = params.copy()
            dn = params.copy()
            up[j] += eps
            dn[j] -= eps
            want[j] = (val(up) - val(dn)) / (2 * eps)
        denom = np.maximum(np.abs(want), 1e-3)
        assert np.max(np.abs(got - want) / denom) < 1e-5
        assert pen >= 0.0


def test_penalty_value_is_mean_squared_input_grad():
    spec = MlpSpec([4, 1])
    rng = np.random.default_rng(2)
    params = rng.standard_normal(spec.size)
    (w, _), = spec.unpack(params)
    x = rng.standard_normal((3, 4))
    pen, _ = penalty_and_grads(spec, params, x)
    assert pen == pytest.approx(float(w[0] @ w[0]), abs=1e-12)


def test_clip_grad_norm():
    g = np.array([3.0, 4.0])
    clipped, norm = clip_grad_norm(g, 1.0)
    assert norm == 5.0
    assert np.allclose(np.linalg.norm(clipped), 1.0, atol=1e-12)
    same, norm2 = clip_grad_norm(g, 10.0)
    assert norm2 == 5.0
    assert np.array_equal(same, g)
    off, _ = clip_grad_norm(g, 0.0)   # zero disables clipping
    assert np.array_equal(off, g)


# ---- optimizer -----------------------------------------------------------------

def test_adam_zero_grad_leaves_params():
    p = np.array([1.0, -2.0, 0.5])
    opt = Adam(3, lr=0.1)
    out = opt.step(p, np.zeros(3))
    assert np.array_equal(out, p)


def test_adam_first_step_is_signed_lr():
    p = np.zeros(4)
    g = np.array([0.3, -0.7, 2.0, 0.0])
    lr = 0.05
    opt = Adam(4, lr=lr, eps=1e-8)
    out = opt.step(p, g)
    want = -lr * g / (np.abs(g) + 1e-8)
    assert np.allclose(out, want, atol=1e-12)


def test_adam_weight_decay_shrinks_params():
    p = np.array([2.0, -2.0])
    opt = Adam(2, lr=0.1, weight_decay=0.5)
    out = opt.step(p, np.zeros(2))
    assert np.array_equal(out, p * (1.0 - 0.1 * 0.5))
    assert np.linalg.norm(out) < np.linalg.norm(p)


def test_adam_state_round_trip():
    rng = np.random.default_rng(0)
    p = rng.standard_normal(5)
    a = Adam(5, lr=0.01)
    for _ in range(3):
        p = a.step(p, rng.standard_normal(5))
    b = Adam(5, lr=0.01)
    b.load_state(a.state_dict())
    g = rng.standard_normal(5)
    assert np.array_equal(a.step(p, g), b.step(p, g))


# ---- gaussian head -------------------------------------------------------------

def test_log_prob_at_mean_unit_std():
    mean = np.zeros(6)
    lp = gaussian_log_prob(mean, np.zeros(6), mean)
    assert lp == pytest.approx(-3.0 * np.log(2.0 * np.pi), abs=1e-12)


def test_log_prob_quadratic_falloff():
    mean = np.zeros(6)
    at_mean = gaussian_log_prob(mean, np.zeros(6), mean)
    two_sigma = gaussian_log_prob(mean, np.zeros(6), np.full(6, 2.0))
    assert at_mean - two_sigma == pytest.approx(0.5 * 4.0 * 6, abs=1e-12)


def test_entropy_closed_form():
    assert gaussian_entropy(np.zeros(6)) == pytest.approx(
        6.0 * 0.5 * np.log(2.0 * np.pi * np.e), abs=1e-12)
    assert gaussian_entropy(np.full(6, -20.0)) == pytest.approx(
        6.0 * (-5.0 + 0.5 + 0.5 * np.log(2.0 * np.pi)), abs=1e-12)


def test_sample_clamps_log_std():
    rng = np.random.default_rng(0)
    mean = np.full(6, 0.2)
    devs = []
    for _ in range(1000):
        raw, logp, clamped = gaussian_sample(rng, mean, np.full(6, -9.0))
        devs.append(np.abs(raw - mean).mean())
        assert np.all(clamped >= -1.0) and np.all(clamped <= 1.0)
        assert logp == pytest.approx(
            gaussian_log_prob(mean, np.full(6, -5.0), raw), abs=1e-12)
    assert np.mean(devs) < 0.01


def test_sample_is_seed_deterministic():
    mean = np.linspace(-1, 1, 6)
    a = gaussian_sample(np.random.default_rng(9), mean, np.full(6, -1.0))
    b = gaussian_sample(np.random.default_rng(9), mean, np.full(6, -1.0))
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


# ---- checkpoints ---------------------------------------------------------------

def test_checkpoint_round_trip_exact(tmp_path):
    rng = np.random.default_rng(4)
    sections = {
        "policy": {"params": rng.standard_normal((3, 4)),
                   "log_std": rng.standard_normal(6),
                   "iteration": 17,
                   "lr": 3.0e-4,
                   "frozen": False,
                   "note": "resume me",
                   "meta": {"widths": [12, 64, 6], "kind": "mlp"}},
        "value": {"params": rng.standard_normal(31)},
    }
    path = tmp_path / "ck.txt"
    save_checkpoint(str(path), sections)
    back = load_checkpoint(str(path))
    assert set(back) == {"policy", "value"}
    assert np.array_equal(back["policy"]["params"], sections["policy"]["params"])
    assert np.array_equal(back["value"]["params"], sections["value"]["params"])
    assert back["policy"]["iteration"] == 17
    assert back["policy"]["lr"] == 3.0e-4
    assert back["policy"]["frozen"] is False
    assert back["policy"]["note"] == "resume me"
    assert back["policy"]["meta"] == {"widths": [12, 64, 6], "kind": "mlp"}


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("hello\n")
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(str(p))
    p.write_text("ppforge-ckpt v1\nkey = 1\n")
    with pytest.raises(ValueError, match="before first section"):
        load_checkpoint(str(p))
    p.write_text("ppforge-ckpt v1\n[s]\n???\n")
    with pytest.raises(ValueError, match="unparseable"):
        load_checkpoint(str(p))
    with pytest.raises(TypeError):
        save_checkpoint(str(p), {"s": {"bad": [1, 2, 3]}})
