"""Adversarial style objective over short state windows.

A least-squares discriminator is pushed toward +1 on demo windows and -1 on
policy windows, with a gradient penalty on the demo samples. The policy's
style reward maps the clamped discriminator score through -log of the
implied fake probability, so it is bounded on both ends.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .motion import FRAME_DIM
from .nets import MlpSpec, mlp_backward, mlp_forward, penalty_and_grads


class StyleUpdateError(RuntimeError):
    """Raised when a discriminator step produces non-finite numbers."""


@dataclass
class StyleConfig:
    window_length: int = 4
    omega_gp: float = 5.0
    eps_floor: float = 1e-4
    literal_log_form: bool = False
    unsquared_penalty: bool = False
    mean: np.ndarray = field(default_factory=lambda: np.zeros(FRAME_DIM))
    std: np.ndarray = field(default_factory=lambda: np.ones(FRAME_DIM))

    @staticmethod
    def from_config(cfg, mean=None, std=None) -> "StyleConfig":
        sc = StyleConfig(
            window_length=cfg["data.window_length"],
            omega_gp=cfg["amp.omega_gp"],
            eps_floor=cfg["amp.eps_floor"],
            literal_log_form=cfg["amp.literal_log_form"],
            unsquared_penalty=cfg["amp.unsquared_penalty"],
        )
        if mean is not None:
            sc.mean = np.asarray(mean, dtype=float)
        if std is not None:
            sc.std = np.asarray(std, dtype=float)
        return sc

    @property
    def input_dim(self):
        return self.window_length * FRAME_DIM

    def normalize(self, windows):
        """Per-channel demo normalization, applied to flat windows."""
        w = np.atleast_2d(np.asarray(windows, dtype=float))
        mean = np.tile(self.mean, self.window_length)
        std = np.tile(self.std, self.window_length)
        return (w - mean) / std

    @property
    def reward_cap(self):
        return -np.log(self.eps_floor)


def disc_loss_and_grads(spec: MlpSpec, params, real_norm, fake_norm,
                        style_cfg: StyleConfig):
    """LSGAN loss with demo-side gradient penalty; returns (loss, grads, diag).

    loss = mean (D(real) - 1)^2 + mean (D(fake) + 1)^2 + omega_gp * penalty.
    Weight decay is the optimizer's job, not part of this loss.
    """
    real = np.atleast_2d(real_norm)
    fake = np.atleast_2d(fake_norm)
    d_real, cache_r = mlp_forward(spec, params, real)
    d_fake, cache_f = mlp_forward(spec, params, fake)
    nr, nf = len(real), len(fake)

    loss_real = float(((d_real - 1.0) ** 2).mean())
    loss_fake = float(((d_fake + 1.0) ** 2).mean())
    g_real, _ = mlp_backward(spec, cache_r, 2.0 * (d_real - 1.0) / nr)
    g_fake, _ = mlp_backward(spec, cache_f, 2.0 * (d_fake + 1.0) / nf)
    grads = g_real + g_fake

    penalty = 0.0
    if style_cfg.omega_gp > 0:
        penalty, g_pen = penalty_and_grads(spec, params, real,
                                           unsquared=style_cfg.unsquared_penalty)
        grads = grads + style_cfg.omega_gp * g_pen

    loss = loss_real + loss_fake + style_cfg.omega_gp * penalty
    if not (np.isfinite(loss) and np.all(np.isfinite(grads))):
        raise StyleUpdateError(
            "non-finite discriminator step: loss_real=%r loss_fake=%r "
            "penalty=%r |real|max=%r |fake|max=%r"
            % (loss_real, loss_fake, penalty,
               float(np.max(np.abs(real))), float(np.max(np.abs(fake)))))
    diag = {
        "loss": loss,
        "loss_real": loss_real,
        "loss_fake": loss_fake,
        "penalty": penalty,
        "real_acc": float((d_real > 0).mean()),
        "fake_acc": float((d_fake < 0).mean()),
        "real_mean": float(d_real.mean()),
        "fake_mean": float(d_fake.mean()),
    }
    return loss, grads, diag


def style_reward(spec: MlpSpec, params, windows_norm, style_cfg: StyleConfig):
    """Bounded style reward per window.

    Clamps the score to [-1, 1], maps it to a fake probability (1 - d) / 2
    floored at eps, and returns -log of it. The literal form instead feeds
    the floored raw score straight into -log, which loses the probabilistic
    reading but matches the printed objective.
    """
    scores, _ = mlp_forward(spec, params, np.atleast_2d(windows_norm))
    d = scores[:, 0]
    eps = style_cfg.eps_floor
    if style_cfg.literal_log_form:
        return -np.log(np.clip(d, eps, 1.0))
    p_fake = np.clip((1.0 - np.clip(d, -1.0, 1.0)) / 2.0, eps, 1.0)
    return -np.log(p_fake)


def make_policy_windows(states, dones, window_length):
    """Full-length windows of consecutive states that never span a reset.

    states: steps x envs x FRAME_DIM post-step states; dones marks the last
    step of each episode. An episode of exactly window_length steps yields
    one window.
    """
    states = np.asarray(states, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    steps, n_envs = dones.shape
    out = []
    for n in range(n_envs):
        start = 0
        for t in range(steps):
            if dones[t, n]:
                _emit_windows(states[start:t + 1, n], window_length, out)
                start = t + 1
        _emit_windows(states[start:steps, n], window_length, out)
    if not out:
        return np.empty((0, window_length * states.shape[2]))
    return np.array(out)


def _emit_windows(segment, window_length, out):
    for s in range(len(segment) - window_length + 1):
        out.append(segment[s:s + window_length].reshape(-1))


def reward_windows(states, dones, window_length, history=None):
    """Per-step windows ending at each step, padded at episode starts.

    Steps earlier than window_length into an episode repeat the episode's
    first state to fill the window. history carries the tail of each env's
    current episode across rollout boundaries and is mutated in place.
    Returns (steps * envs) x (window_length * FRAME_DIM) in (t, env) order.
    """
    states = np.asarray(states, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    steps, n_envs, dim = states.shape
    if history is None:
        history = [[] for _ in range(n_envs)]
    out = np.empty((steps * n_envs, window_length * dim))
    for n in range(n_envs):
        hist = history[n]
        for t in range(steps):
            hist.append(states[t, n])
            if len(hist) > window_length:
                del hist[:len(hist) - window_length]
            win = hist
            if len(win) < window_length:
                pad = [win[0]] * (window_length - len(win))
                win = pad + win
            out[t * n_envs + n] = np.concatenate(win)
            if dones[t, n]:
                hist.clear()
    return out, history
