"""PPO with an asymmetric critic and the adversarial style objective.

The actor sees the noisy delayed 26-value view; the critic sees the exact
52-value privileged view. Style rewards come from a snapshot of the
discriminator taken before its own update each iteration, so a resumed run
replays the original numbers bit for bit.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .arm import ArmModel, load_arm_params
from .envs import (ACTION_DIM, POLICY_OBS_DIM, PRIV_OBS_DIM, VectorEnv)
from .motion import build_dataset, load_clips
from .nets import (Adam, MlpSpec, clip_grad_norm, gaussian_entropy,
                   gaussian_log_prob, gaussian_sample, init_mlp,
                   load_checkpoint, mlp_backward, mlp_forward,
                   save_checkpoint, LOG_STD_MIN, LOG_STD_MAX)
from .style import (StyleConfig, StyleUpdateError, disc_loss_and_grads,
                    make_policy_windows, reward_windows, style_reward)

METRIC_COLUMNS = (
    "iteration", "samples", "mean_task_reward", "mean_style_reward",
    "mean_r_hit", "mean_r_acc", "mean_r_dof", "mean_r_ar", "mean_r_ap",
    "disc_loss", "disc_real_acc", "disc_fake_acc", "success_rate_train",
    "kl", "clip_frac",
)

REWARD_COMPONENTS = ("r_hit", "r_acc", "r_dof", "r_ar", "r_ap", "r_illegal")


def compute_gae(rewards, values, bootstrap, dones, gamma, lam):
    """Generalized advantage estimates and returns, arrays steps x envs."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    steps = rewards.shape[0]
    adv = np.zeros_like(rewards)
    last = np.zeros(rewards.shape[1])
    next_value = np.asarray(bootstrap, dtype=float)
    for t in range(steps - 1, -1, -1):
        nonterm = 1.0 - dones[t].astype(float)
        delta = rewards[t] + gamma * next_value * nonterm - values[t]
        last = delta + gamma * lam * nonterm * last
        adv[t] = last
        next_value = values[t]
    return adv, adv + values


@dataclass
class RolloutBuffer:
    obs_policy: np.ndarray
    obs_priv: np.ndarray
    actions: np.ndarray           # raw (unclamped) samples; their logp is exact
    logp: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    states: np.ndarray            # post-step (q, qdot) per step/env
    r_task: np.ndarray
    components: dict
    r_style: np.ndarray
    bootstrap: np.ndarray
    episodes: int = 0
    successes: int = 0


@dataclass
class PolicySnapshot:
    """Inference-only policy head recovered from a checkpoint."""

    spec: MlpSpec
    params: np.ndarray
    log_std: np.ndarray

    def mean(self, obs):
        out, _ = mlp_forward(self.spec, self.params, obs)
        return out

    def act(self, obs):
        """Deterministic action for evaluation."""
        single = np.asarray(obs).ndim == 1
        a = np.clip(self.mean(obs), -1.0, 1.0)
        return a[0] if single else a


def load_policy(ckpt_path):
    """Returns (PolicySnapshot, full checkpoint sections)."""
    sections = load_checkpoint(ckpt_path)
    if "policy" not in sections:
        raise ValueError("%s: checkpoint has no policy section" % ckpt_path)
    pol = sections["policy"]
    spec = MlpSpec([int(w) for w in pol["widths"]])
    return PolicySnapshot(spec, pol["params"], pol["log_std"]), sections


class Trainer:
    """Owns the nets, optimizers, envs, and all RNG streams of one run."""

    def __init__(self, cfg, run_dir=None, log_fn=None, backend=None):
        self.cfg = cfg
        self.run_dir = run_dir
        self.log_fn = log_fn
        seed = cfg["run.seed"]
        # fixed stream order: envs, action sampling, minibatch permutations,
        # discriminator batches, net init, demo teaching, holdout spawns
        (ss_envs, ss_sample, ss_perm, ss_disc,
         ss_init, ss_demo, ss_holdout) = np.random.SeedSequence(seed).spawn(7)
        self.rng_sample = np.random.Generator(np.random.PCG64(ss_sample))
        self.rng_perm = np.random.Generator(np.random.PCG64(ss_perm))
        self.rng_disc = np.random.Generator(np.random.PCG64(ss_disc))
        init_envs, init_pol, init_val, init_disc = ss_init.spawn(4)

        self.model = ArmModel(load_arm_params())
        self.n_envs = cfg["ppo.num_envs"]
        self.horizon = cfg["ppo.horizon"]
        self.venv = VectorEnv(cfg, self.n_envs, ss_envs, self.model,
                              backend=backend)

        self.gamma = cfg["ppo.gamma"]
        self.lam = cfg["ppo.lam"]
        self.clip = cfg["ppo.clip"]
        self.epochs = cfg["ppo.epochs"]
        self.minibatches = cfg["ppo.minibatches"]
        self.entropy_coef = cfg["ppo.entropy_coef"]
        self.max_grad_norm = cfg["ppo.max_grad_norm"]
        self.omega_task = cfg["reward.omega_task"]
        self.omega_style = cfg["reward.omega_style"]

        self.policy_spec = MlpSpec([POLICY_OBS_DIM] + list(cfg["net.policy_hidden"])
                                   + [ACTION_DIM])
        self.value_spec = MlpSpec([PRIV_OBS_DIM] + list(cfg["net.value_hidden"]) + [1])
        self.policy_params = init_mlp(np.random.Generator(np.random.PCG64(init_pol)),
                                      self.policy_spec, out_gain=0.01)
        self.log_std = np.full(ACTION_DIM, cfg["net.log_std_init"])
        self.value_params = init_mlp(np.random.Generator(np.random.PCG64(init_val)),
                                     self.value_spec, out_gain=1.0)
        self.opt_policy = Adam(self.policy_spec.size + ACTION_DIM,
                               cfg["ppo.lr_policy"])
        self.opt_value = Adam(self.value_spec.size, cfg["ppo.lr_value"])

        # style machinery only exists when the style weight is nonzero
        self.style_enabled = self.omega_style > 0.0
        self.dataset = None
        self.disc_spec = None
        self.disc_params = None
        self.opt_disc = None
        self.style_cfg = None
        if self.style_enabled:
            rng_demo = np.random.Generator(np.random.PCG64(ss_demo))
            clips = self._load_or_teach_clips(rng_demo)
            self.dataset = build_dataset(clips, cfg["data.factors"],
                                         cfg["data.window_length"])
            mean, std = self.dataset.channel_stats()
            self.style_cfg = StyleConfig.from_config(cfg, mean, std)
            self.disc_spec = MlpSpec([self.style_cfg.input_dim]
                                     + list(cfg["net.disc_hidden"]) + [1])
            self.disc_params = init_mlp(
                np.random.Generator(np.random.PCG64(init_disc)),
                self.disc_spec, out_gain=1.0)
            self.opt_disc = Adam(self.disc_spec.size, cfg["ppo.lr_disc"],
                                 weight_decay=cfg["amp.weight_decay"])

        # frozen holdout spawn streams; evaluating never touches the
        # training streams, so resumed runs stay bit-exact
        self._holdout_streams = ss_holdout.spawn(cfg["train.eval_episodes"])
        self.best_rate = -1.0

        self.iteration = 0
        self.samples = 0
        self._obs = None
        self._priv = None
        self._style_hist = [[] for _ in range(self.n_envs)]
        self._metrics_rows = []

    def _load_or_teach_clips(self, rng_demo):
        from .fdcc import make_demo_set
        dataset_dir = self.cfg["io.dataset"]
        clips_dir = self.cfg["io.clips"]
        if dataset_dir:
            return load_clips(dataset_dir)
        if clips_dir:
            return load_clips(clips_dir)
        return make_demo_set(rng_demo, self.model, self.cfg)

    def _log(self, msg):
        if self.log_fn is not None:
            self.log_fn(msg)

    # -- rollout collection --

    def _policy_forward(self, obs):
        out, _ = mlp_forward(self.policy_spec,
                             self.policy_params, obs)
        return out

    def _value_forward(self, priv):
        out, _ = mlp_forward(self.value_spec, self.value_params, priv)
        return out[:, 0]

    def collect(self) -> RolloutBuffer:
        steps, n = self.horizon, self.n_envs
        if self._obs is None:
            self._obs, self._priv = self.venv.reset_all()
        obs_policy = np.empty((steps, n, POLICY_OBS_DIM))
        obs_priv = np.empty((steps, n, PRIV_OBS_DIM))
        actions = np.empty((steps, n, ACTION_DIM))
        logp = np.empty((steps, n))
        values = np.empty((steps, n))
        dones = np.zeros((steps, n), dtype=bool)
        states = np.empty((steps, n, 12))
        r_task = np.empty((steps, n))
        components = {k: np.zeros((steps, n)) for k in REWARD_COMPONENTS}
        episodes = successes = 0
        for t in range(steps):
            obs_policy[t] = self._obs
            obs_priv[t] = self._priv
            mean = self._policy_forward(self._obs)
            raw, lp, a_env = gaussian_sample(self.rng_sample, mean, self.log_std)
            values[t] = self._value_forward(self._priv)
            nxt, nxt_priv, rewards, done_v, reasons, succ, st = self.venv.step(a_env)
            actions[t] = raw
            logp[t] = lp
            dones[t] = done_v
            states[t] = st
            for i, br in enumerate(rewards):
                r_task[t, i] = br.r_task_total
                for k in REWARD_COMPONENTS:
                    components[k][t, i] = getattr(br, k)
            episodes += int(done_v.sum())
            successes += int((succ & done_v).sum())
            self._obs, self._priv = nxt, nxt_priv
        bootstrap = self._value_forward(self._priv)
        return RolloutBuffer(obs_policy, obs_priv, actions, logp, values,
                             dones, states, r_task, components,
                             np.zeros((steps, n)), bootstrap,
                             episodes=episodes, successes=successes)

    def fill_style_rewards(self, buf: RolloutBuffer):
        if not self.style_enabled:
            return
        windows, self._style_hist = reward_windows(
            buf.states, buf.dones, self.style_cfg.window_length,
            self._style_hist)
        wn = self.style_cfg.normalize(windows)
        r = style_reward(self.disc_spec, self.disc_params, wn, self.style_cfg)
        buf.r_style = r.reshape(buf.states.shape[0], buf.states.shape[1])

    # -- updates --

    def ppo_update(self, buf: RolloutBuffer, advantages, returns):
        steps, n = advantages.shape
        batch = steps * n
        obs = buf.obs_policy.reshape(batch, -1)
        priv = buf.obs_priv.reshape(batch, -1)
        act = buf.actions.reshape(batch, -1)
        logp_old = buf.logp.reshape(batch)
        adv = advantages.reshape(batch)
        ret = returns.reshape(batch)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        snapshot = (self.policy_params.copy(), self.log_std.copy(),
                    self.value_params.copy(),
                    self.opt_policy.state_dict(), self.opt_value.state_dict())
        snap_opt = ({k: (v.copy() if isinstance(v, np.ndarray) else v)
                     for k, v in snapshot[3].items()},
                    {k: (v.copy() if isinstance(v, np.ndarray) else v)
                     for k, v in snapshot[4].items()})

        kls, clipfracs = [], []
        mb_size = batch // self.minibatches
        for _ in range(self.epochs):
            perm = self.rng_perm.permutation(batch)
            for m in range(self.minibatches):
                idx = perm[m * mb_size:(m + 1) * mb_size] if m < self.minibatches - 1 \
                    else perm[m * mb_size:]
                ok = self._ppo_minibatch(obs[idx], priv[idx], act[idx],
                                         logp_old[idx], adv[idx], ret[idx],
                                         kls, clipfracs)
                if not ok:
                    self.policy_params, self.log_std, self.value_params = (
                        snapshot[0], snapshot[1], snapshot[2])
                    self.opt_policy.load_state(snap_opt[0])
                    self.opt_value.load_state(snap_opt[1])
                    self.opt_policy.lr *= 0.5
                    self.opt_value.lr *= 0.5
                    self._log("non-finite update rejected; parameters rolled "
                              "back, learning rates halved to %g/%g"
                              % (self.opt_policy.lr, self.opt_value.lr))
                    return {"kl": 0.0, "clip_frac": 0.0, "rolled_back": True}
        return {"kl": float(np.mean(kls)), "clip_frac": float(np.mean(clipfracs)),
                "rolled_back": False}

    def _ppo_minibatch(self, obs, priv, act, logp_old, adv, ret, kls, clipfracs):
        b = len(obs)
        mean, cache = mlp_forward(self.policy_spec, self.policy_params, obs)
        ls = np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)
        var = np.exp(2.0 * ls)
        logp_new = gaussian_log_prob(mean, self.log_std, act)
        ratio = np.exp(logp_new - logp_old)
        surr1 = ratio * adv
        surr2 = np.clip(ratio, 1.0 - self.clip, 1.0 + self.clip) * adv
        obj = np.minimum(surr1, surr2)
        entropy = gaussian_entropy(self.log_std)
        loss_pi = -obj.mean() - self.entropy_coef * entropy

        # d(-obj)/d logp flows only where the unclipped branch is active
        active = (surr1 <= surr2).astype(float)
        dlogp = -(active * ratio * adv) / b
        dmean = dlogp[:, None] * (act - mean) / var
        g_mlp, _ = mlp_backward(self.policy_spec, cache, dmean)
        dls = (dlogp[:, None] * ((act - mean) ** 2 / var - 1.0)).sum(axis=0)
        in_range = (self.log_std > LOG_STD_MIN) & (self.log_std < LOG_STD_MAX)
        dls = np.where(in_range, dls - self.entropy_coef, 0.0)
        g_pol = np.concatenate([g_mlp, dls])

        v, vcache = mlp_forward(self.value_spec, self.value_params, priv)
        v = v[:, 0]
        loss_v = float(((v - ret) ** 2).mean())
        gv_out = (2.0 * (v - ret) / b)[:, None]
        g_val, _ = mlp_backward(self.value_spec, vcache, gv_out)

        finite = (np.isfinite(loss_pi) and np.isfinite(loss_v)
                  and np.all(np.isfinite(g_pol)) and np.all(np.isfinite(g_val)))
        if not finite:
            return False
        g_pol, _ = clip_grad_norm(g_pol, self.max_grad_norm)
        g_val, _ = clip_grad_norm(g_val, self.max_grad_norm)
        packed = np.concatenate([self.policy_params, self.log_std])
        packed = self.opt_policy.step(packed, g_pol)
        self.policy_params = packed[:self.policy_spec.size]
        self.log_std = np.clip(packed[self.policy_spec.size:],
                               LOG_STD_MIN, LOG_STD_MAX)
        self.value_params = self.opt_value.step(self.value_params, g_val)
        kls.append(float(np.mean(logp_old - logp_new)))
        clipfracs.append(float(np.mean(np.abs(ratio - 1.0) > self.clip)))
        return True

    def disc_update(self, buf: RolloutBuffer):
        zero = {"disc_loss": 0.0, "disc_real_acc": 0.0, "disc_fake_acc": 0.0}
        if not self.style_enabled:
            return zero
        pool = make_policy_windows(buf.states, buf.dones,
                                   self.style_cfg.window_length)
        if len(pool) == 0:
            self._log("no full-length policy windows this iteration; "
                      "discriminator update skipped")
            return zero
        cfg = self.cfg
        batch_real = cfg["amp.batch_real"]
        batch_fake = cfg["amp.batch_fake"]
        n_batches = min(cfg["amp.max_batches_per_epoch"],
                        max(1, -(-len(pool) // batch_fake)))
        losses, racc, facc = [], [], []
        for _ in range(cfg["amp.epochs"]):
            for _ in range(n_batches):
                real = self.dataset.sample_windows(self.rng_disc, batch_real)
                fake = pool[self.rng_disc.integers(0, len(pool), size=batch_fake)]
                try:
                    loss, grads, diag = disc_loss_and_grads(
                        self.disc_spec, self.disc_params,
                        self.style_cfg.normalize(real),
                        self.style_cfg.normalize(fake), self.style_cfg)
                except StyleUpdateError as exc:
                    self._log("discriminator step rejected: %s" % exc)
                    return {"disc_loss": float("nan") if not losses
                            else float(np.mean(losses)),
                            "disc_real_acc": float(np.mean(racc)) if racc else 0.0,
                            "disc_fake_acc": float(np.mean(facc)) if facc else 0.0}
                self.disc_params = self.opt_disc.step(self.disc_params, grads)
                losses.append(diag["loss"])
                racc.append(diag["real_acc"])
                facc.append(diag["fake_acc"])
        return {"disc_loss": float(np.mean(losses)),
                "disc_real_acc": float(np.mean(racc)),
                "disc_fake_acc": float(np.mean(facc))}

    def holdout_eval(self):
        """Deterministic success rate of the current mean policy on the
        frozen holdout spawns."""
        from .envs import PingPongEnv
        wins = 0
        for ss in self._holdout_streams:
            env = PingPongEnv(self.cfg, self.model,
                              np.random.Generator(np.random.PCG64(ss)))
            obs, _ = env.reset()
            while True:
                mean = self._policy_forward(obs)
                res = env.step(np.clip(mean[0], -1.0, 1.0))
                obs = res.obs_policy
                if res.done:
                    wins += int(res.success)
                    break
        return wins / max(1, len(self._holdout_streams))

    # -- the loop --

    def train(self, iterations=None):
        if iterations is None:
            iterations = self.cfg["ppo.iterations"]
        ckpt_every = self.cfg["train.ckpt_every"]
        eval_every = self.cfg["train.eval_every"]
        for _ in range(iterations):
            self.iteration += 1
            buf = self.collect()
            self.fill_style_rewards(buf)
            total = (self.omega_task * buf.r_task
                     + self.omega_style * buf.r_style)
            adv, ret = compute_gae(total, buf.values, buf.bootstrap,
                                   buf.dones, self.gamma, self.lam)
            stats = self.ppo_update(buf, adv, ret)
            dstats = self.disc_update(buf)
            self.samples += self.horizon * self.n_envs
            sr = buf.successes / buf.episodes if buf.episodes else 0.0
            row = {
                "iteration": self.iteration,
                "samples": self.samples,
                "mean_task_reward": float(buf.r_task.mean()),
                "mean_style_reward": float(buf.r_style.mean()),
                "mean_r_hit": float(buf.components["r_hit"].mean()),
                "mean_r_acc": float(buf.components["r_acc"].mean()),
                "mean_r_dof": float(buf.components["r_dof"].mean()),
                "mean_r_ar": float(buf.components["r_ar"].mean()),
                "mean_r_ap": float(buf.components["r_ap"].mean()),
                "disc_loss": dstats["disc_loss"],
                "disc_real_acc": dstats["disc_real_acc"],
                "disc_fake_acc": dstats["disc_fake_acc"],
                "success_rate_train": sr,
                "kl": stats["kl"],
                "clip_frac": stats["clip_frac"],
            }
            self._metrics_rows.append(row)
            self._write_metrics()
            self._log("iter %d  task %.4f  style %.4f  success %.3f"
                      % (self.iteration, row["mean_task_reward"],
                         row["mean_style_reward"], sr))
            if self.run_dir and ckpt_every > 0 and self.iteration % ckpt_every == 0:
                self.save(os.path.join(self.run_dir,
                                       "ckpt_%04d.txt" % self.iteration))
            if eval_every > 0 and self.iteration % eval_every == 0:
                rate = self.holdout_eval()
                self._log("holdout success %.3f (best %.3f)"
                          % (rate, max(rate, self.best_rate)))
                if rate > self.best_rate:
                    self.best_rate = rate
                    if self.run_dir:
                        self.save(os.path.join(self.run_dir, "best.txt"))
        if self.run_dir:
            self.save(os.path.join(self.run_dir, "final.txt"))
        return self._metrics_rows

    def metrics_csv_text(self):
        lines = [",".join(METRIC_COLUMNS)]
        for row in self._metrics_rows:
            cells = []
            for c in METRIC_COLUMNS:
                v = row[c]
                cells.append(str(v) if isinstance(v, int) else "%.10g" % v)
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def _write_metrics(self):
        if self.run_dir:
            with open(os.path.join(self.run_dir, "metrics.csv"), "w",
                      encoding="utf-8") as fh:
                fh.write(self.metrics_csv_text())

    # -- checkpointing --

    def save(self, path):
        sections = {
            "meta": {
                "iteration": self.iteration,
                "samples": self.samples,
                "n_envs": self.n_envs,
                "horizon": self.horizon,
                "omega_task": self.omega_task,
                "omega_style": self.omega_style,
                "style_enabled": self.style_enabled,
                "best_rate": self.best_rate,
            },
            "policy": {
                "widths": np.array(self.policy_spec.widths),
                "params": self.policy_params,
                "log_std": self.log_std,
            },
            "value": {
                "widths": np.array(self.value_spec.widths),
                "params": self.value_params,
            },
            "opt_policy": self.opt_policy.state_dict(),
            "opt_value": self.opt_value.state_dict(),
            "rng": {
                "sample": self.rng_sample.bit_generator.state,
                "perm": self.rng_perm.bit_generator.state,
                "disc": self.rng_disc.bit_generator.state,
            },
        }
        if self.style_enabled:
            sections["disc"] = {
                "widths": np.array(self.disc_spec.widths),
                "params": self.disc_params,
                "norm_mean": self.style_cfg.mean,
                "norm_std": self.style_cfg.std,
                "window_length": self.style_cfg.window_length,
            }
            sections["opt_disc"] = self.opt_disc.state_dict()
        if self._obs is not None:
            sections["trainer"] = {"obs": self._obs, "priv": self._priv}
            hist = {}
            for i, h in enumerate(self._style_hist):
                hist["h%d" % i] = (np.array(h) if h else np.zeros((0, 12)))
            sections["style_hist"] = hist
            for i, st in enumerate(self.venv.get_states()):
                sections["env_%d" % i] = st
        save_checkpoint(path, sections)
        return path

    def load(self, path):
        sections = load_checkpoint(path)
        meta = sections["meta"]
        self.iteration = int(meta["iteration"])
        self.samples = int(meta["samples"])
        self.best_rate = float(meta.get("best_rate", -1.0))
        if int(meta["n_envs"]) != self.n_envs:
            raise ValueError("checkpoint env count %d does not match config %d"
                             % (meta["n_envs"], self.n_envs))
        pol = sections["policy"]
        if list(pol["widths"].astype(int)) != self.policy_spec.widths:
            raise ValueError("checkpoint policy widths do not match config")
        self.policy_params = pol["params"]
        self.log_std = pol["log_std"]
        self.value_params = sections["value"]["params"]
        self.opt_policy.load_state(sections["opt_policy"])
        self.opt_value.load_state(sections["opt_value"])
        rng = sections["rng"]
        self.rng_sample.bit_generator.state = rng["sample"]
        self.rng_perm.bit_generator.state = rng["perm"]
        self.rng_disc.bit_generator.state = rng["disc"]
        if self.style_enabled:
            if "disc" not in sections:
                raise ValueError("config enables the style term but the "
                                 "checkpoint has no discriminator")
            disc = sections["disc"]
            self.disc_params = disc["params"]
            self.style_cfg.mean = disc["norm_mean"]
            self.style_cfg.std = disc["norm_std"]
            self.opt_disc.load_state(sections["opt_disc"])
        if "trainer" in sections:
            self._obs = sections["trainer"]["obs"]
            self._priv = sections["trainer"]["priv"]
            hist = sections.get("style_hist", {})
            self._style_hist = []
            for i in range(self.n_envs):
                arr = hist.get("h%d" % i)
                self._style_hist.append(
                    [row.copy() for row in arr] if arr is not None and len(arr)
                    else [])
            self.venv.set_states([sections["env_%d" % i]
                                  for i in range(self.n_envs)])
        return self
