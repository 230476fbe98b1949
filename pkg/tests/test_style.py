import numpy as np
import pytest

from ppforge.motion import FRAME_DIM
from ppforge.nets import MlpSpec, init_mlp
from ppforge.style import (
    StyleConfig, StyleUpdateError, disc_loss_and_grads, make_policy_windows,
    reward_windows, style_reward,
)


def no_gp():
    return StyleConfig(omega_gp=0.0)


def bias_only_net(d_value):
    """Zero-weight scalar net whose output is the constant d_value."""
    spec = MlpSpec([4, 1])
    params = np.zeros(spec.size)
    params[-1] = d_value
    return spec, params


# ---- discriminator loss ----------------------------------------------------------

def test_perfect_discriminator_loss_is_zero():
    spec = MlpSpec([2, 1])
    params = np.zeros(spec.size)
    params[0] = 1.0   # D(x) = x0
    real = np.array([[1.0, 0.3], [1.0, -2.0]])
    fake = np.array([[-1.0, 0.8], [-1.0, 5.0]])
    loss, grads, diag = disc_loss_and_grads(spec, params, real, fake, no_gp())
    assert loss == 0.0
    assert np.array_equal(grads, np.zeros(spec.size))
    assert diag["real_acc"] == 1.0 and diag["fake_acc"] == 1.0
    assert diag["real_mean"] == 1.0 and diag["fake_mean"] == -1.0


def test_zero_discriminator_loss_is_two():
    spec, params = bias_only_net(0.0)
    rng = np.random.default_rng(0)
    real = rng.standard_normal((8, 4))
    fake = rng.standard_normal((8, 4))
    loss, _, diag = disc_loss_and_grads(spec, params, real, fake, no_gp())
    assert loss == 2.0
    assert diag["loss_real"] == 1.0 and diag["loss_fake"] == 1.0


def test_linear_discriminator_penalty_is_weight_norm():
    spec = MlpSpec([4, 1])
    rng = np.random.default_rng(3)
    params = rng.standard_normal(spec.size)
    (w, _), = spec.unpack(params)
    real = rng.standard_normal((5, 4))
    fake = rng.standard_normal((5, 4))
    cfg = StyleConfig(omega_gp=1.0)
    _, _, diag = disc_loss_and_grads(spec, params, real, fake, cfg)
    assert diag["penalty"] == pytest.approx(float(w[0] @ w[0]), abs=1e-12)


def test_disc_gradients_match_central_differences():
    rng = np.random.default_rng(7)
    spec = MlpSpec([4, 6, 1])
    params = init_mlp(rng, spec) + 0.05 * rng.standard_normal(spec.size)
    real = rng.standard_normal((3, 4))
    fake = rng.standard_normal((3, 4))
    cfg = StyleConfig(omega_gp=5.0)
    _, got, _ = disc_loss_and_grads(spec, params, real, fake, cfg)
    eps = 1e-6
    want = np.empty(spec.size)
    for j in range(spec.size):
        up = params.copy()
        dn = params.copy()
        up[j] += eps
        dn[j] -= eps
        lu, _, _ = disc_loss_and_grads(spec, up, real, fake, cfg)
        ld, _, _ = disc_loss_and_grads(spec, dn, real, fake, cfg)
        want[j] = (lu - ld) / (2 * eps)
    denom = np.maximum(np.abs(want), 1e-3)
    assert np.max(np.abs(got - want) / denom) < 1e-5


def test_disc_update_raises_on_non_finite():
    spec = MlpSpec([4, 1])
    params = np.full(spec.size, np.nan)
    with pytest.raises(StyleUpdateError, match="non-finite"):
        disc_loss_and_grads(spec, params, np.zeros((2, 4)), np.zeros((2, 4)),
                            no_gp())


# ---- style reward ----------------------------------------------------------------

def test_style_reward_at_the_three_anchor_scores():
    cfg = StyleConfig(eps_floor=1e-4)
    for d, want in ((-1.0, 0.0),
                    (1.0, np.log(1e4)),
                    (0.0, -np.log(0.5))):
        spec, params = bias_only_net(d)
        r = style_reward(spec, params, np.zeros((3, 4)), cfg)
        assert np.allclose(r, want, atol=1e-12)
    assert cfg.reward_cap == pytest.approx(np.log(1e4))


def test_style_reward_clamps_out_of_range_scores():
    cfg = StyleConfig(eps_floor=1e-4)
    spec, params = bias_only_net(7.0)   # clamps to 1 before the mapping
    assert np.allclose(style_reward(spec, params, np.zeros((1, 4)), cfg),
                       np.log(1e4), atol=1e-12)
    spec, params = bias_only_net(-12.0)
    assert np.allclose(style_reward(spec, params, np.zeros((1, 4)), cfg),
                       0.0, atol=1e-12)


def test_style_reward_literal_log_form():
    cfg = StyleConfig(eps_floor=1e-4, literal_log_form=True)
    spec, params = bias_only_net(0.5)
    assert np.allclose(style_reward(spec, params, np.zeros((1, 4)), cfg),
                       -np.log(0.5), atol=1e-12)
    spec, params = bias_only_net(-0.3)  # floored at eps
    assert np.allclose(style_reward(spec, params, np.zeros((1, 4)), cfg),
                       np.log(1e4), atol=1e-12)


def test_normalize_uses_tiled_channel_stats():
    cfg = StyleConfig(window_length=2,
                      mean=np.arange(FRAME_DIM, dtype=float),
                      std=np.full(FRAME_DIM, 2.0))
    w = np.ones((1, 2 * FRAME_DIM))
    out = cfg.normalize(w)
    tiled = np.tile(np.arange(FRAME_DIM, dtype=float), 2)
    assert np.array_equal(out, (w - tiled) / 2.0)


# ---- policy windows --------------------------------------------------------------

def seq_states(steps, envs=1):
    out = np.zeros((steps, envs, FRAME_DIM))
    for t in range(steps):
        for n in range(envs):
            out[t, n, 0] = 100 * n + t
    return out


def test_exact_length_episode_gives_one_window():
    states = seq_states(4)
    dones = np.zeros((4, 1), bool)
    dones[3, 0] = True
    wins = make_policy_windows(states, dones, 4)
    assert wins.shape == (1, 4 * FRAME_DIM)
    assert np.array_equal(wins[0], states[:, 0].reshape(-1))


def test_episode_two_longer_gives_three_starts():
    states = seq_states(6)
    dones = np.zeros((6, 1), bool)
    wins = make_policy_windows(states, dones, 4)
    assert wins.shape == (3, 4 * FRAME_DIM)
    starts = [w[0] for w in wins]         # channel 0 of the first frame
    assert starts == [0.0, 1.0, 2.0]


def test_windows_never_span_a_reset():
    states = seq_states(8)
    dones = np.zeros((8, 1), bool)
    dones[2, 0] = True                    # 3-step episode, too short
    wins = make_policy_windows(states, dones, 4)
    assert wins.shape == (2, 4 * FRAME_DIM)
    for w in wins:
        frames = w.reshape(4, FRAME_DIM)[:, 0]
        assert np.all(np.diff(frames) == 1.0)
        assert not (2.0 in frames and 3.0 in frames)
    assert make_policy_windows(states[:2], dones[:2], 4).shape == (0, 4 * FRAME_DIM)


def test_windows_keep_envs_separate():
    states = seq_states(5, envs=2)
    dones = np.zeros((5, 2), bool)
    wins = make_policy_windows(states, dones, 4)
    assert wins.shape == (4, 4 * FRAME_DIM)
    for w in wins:
        frames = w.reshape(4, FRAME_DIM)[:, 0]
        assert np.all(np.diff(frames) == 1.0)  # never mixes the 100-offset env


# ---- per-step reward windows ------------------------------------------------------

def test_reward_windows_pad_the_episode_start():
    states = seq_states(3)
    dones = np.zeros((3, 1), bool)
    out, _ = reward_windows(states, dones, 3)
    s = states[:, 0]
    assert np.array_equal(out[0], np.concatenate([s[0], s[0], s[0]]))
    assert np.array_equal(out[1], np.concatenate([s[0], s[0], s[1]]))
    assert np.array_equal(out[2], np.concatenate([s[0], s[1], s[2]]))


def test_reward_windows_reset_after_done():
    states = seq_states(3)
    dones = np.zeros((3, 1), bool)
    dones[1, 0] = True
    out, _ = reward_windows(states, dones, 3)
    s = states[:, 0]
    assert np.array_equal(out[2], np.concatenate([s[2], s[2], s[2]]))


def test_reward_windows_history_spans_rollout_boundary():
    states = seq_states(3)
    dones = np.zeros((3, 1), bool)
    first, hist = reward_windows(states[:2], dones[:2], 3)
    second, _ = reward_windows(states[2:], dones[2:], 3, history=hist)
    s = states[:, 0]
    assert np.array_equal(second[0], np.concatenate([s[0], s[1], s[2]]))


def test_reward_windows_order_is_step_major():
    states = seq_states(2, envs=3)
    dones = np.zeros((2, 3), bool)
    out, _ = reward_windows(states, dones, 2)
    assert out.shape == (6, 2 * FRAME_DIM)
    # row t * envs + n ends with state (t, n)
    for t in range(2):
        for n in range(3):
            assert out[t * 3 + n][-FRAME_DIM] == 100 * n + t
