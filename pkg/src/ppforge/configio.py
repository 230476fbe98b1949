"""Layered key=value configuration with schema validation and provenance.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
Values are merged in order: schema defaults, then an optional defaults file,
then a user file, then ``--set key=value`` overrides. Every key consumed
anywhere in the package is declared in SCHEMA below; unknown keys are
rejected with the offending source named.
"""

from __future__ import annotations

import os
import time


class ConfigError(ValueError):
    pass


def _parse_bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean: %r" % s)


def _parse_int_list(s):
    s = s.strip()
    if not s:
        return []
    return [int(tok) for tok in s.replace(",", " ").split()]


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


# type tag -> (parser, human name)
_TYPES = {
    "f": (float, "float"),
    "i": (int, "int"),
    "b": (_parse_bool, "bool"),
    "s": (lambda s: s, "str"),
    "I": (_parse_int_list, "int list"),
}

# ---- schema ----------------------------------------------------------------
# key: (type tag, default, doc)
SCHEMA = {
    # world physics
    "gravity": ("f", 9.81, "gravitational acceleration, m/s^2"),
    "table.length": ("f", 2.74, "table length along y, m"),
    "table.width": ("f", 1.525, "table width along x, m"),
    "table.height": ("f", 0.76, "table top above the floor, m"),
    "table.restitution": ("f", 0.9, "normal restitution of table bounces"),
    "table.friction": ("f", 0.1, "tangential impulse ratio scale for table bounces"),
    "bat.radius": ("f", 0.08, "bat disc radius, m"),
    "bat.restitution": ("f", 0.9, "normal restitution of bat contact"),
    "bat.friction": ("f", 0.1, "tangential impulse ratio scale for bat contact"),
    "ball.radius": ("f", 0.02, "ball radius, m"),
    "net.height": ("f", 0.1525, "net height above the table top, m"),
    "backend": ("s", "A", "dynamics backend: A or B"),
    "backend_b.integrator": ("s", "velocity_verlet", "integrator for backend B"),
    "backend_b.contact": ("s", "penalty_spring", "contact model for backend B"),
    "backend_b.stiffness": ("f", 90000.0, "penalty spring stiffness, 1/s^2"),
    "backend_b.damping": ("f", 24.0, "penalty contact damping, 1/s"),
    "backend_b.substeps": ("i", 8, "integration substeps per physics step (backend B)"),
    # rates
    "run.seed": ("i", 0, "master seed; every RNG stream derives from it"),
    "sim.hz": ("i", 120, "physics rate"),
    "sim.decimation": ("i", 2, "physics steps per policy step (policy rate = sim.hz/decimation)"),
    # arm
    "arm.config": ("s", "", "arm geometry file; empty selects the packaged 6R arm"),
    "arm.inertia": ("f", 1.0, "diagonal joint inertia used by the compliance controller"),
    # controller nominal gains (used when randomization is off)
    "ctrl.kp": ("f", 400.0, "nominal PD stiffness per joint"),
    "ctrl.kd": ("f", 20.0, "nominal PD damping per joint"),
    # action
    "action.delta_max": ("f", 0.12, "max joint-target delta per policy step, rad; with the PD gains this bounds joint speed near kp*delta/kd"),
    # environment
    "env.episode_max_steps": ("i", 150, "policy steps before timeout"),
    "env.spawn.speed_lo": ("f", 4.0, "spawn speed lower bound, m/s"),
    "env.spawn.speed_hi": ("f", 6.6, "spawn speed upper bound, m/s"),
    "env.spawn.cone_deg": ("f", 3.0, "direction cone half-angle around the aim direction, deg"),
    "env.spawn.x_lo": ("f", -0.15, "spawn box"),
    "env.spawn.x_hi": ("f", 0.15, "spawn box"),
    "env.spawn.y_lo": ("f", 0.85, "spawn box"),
    "env.spawn.y_hi": ("f", 1.0, "spawn box"),
    "env.spawn.z_lo": ("f", 1.05, "spawn box"),
    "env.spawn.z_hi": ("f", 1.15, "spawn box"),
    "env.spawn.target_x_lo": ("f", -0.25, "aimed first-bounce region on the robot half"),
    "env.spawn.target_x_hi": ("f", 0.25, "aimed first-bounce region on the robot half"),
    "env.spawn.target_y_lo": ("f", -0.65, "aimed first-bounce region on the robot half"),
    "env.spawn.target_y_hi": ("f", -0.40, "aimed first-bounce region on the robot half"),
    "env.goal.radius": ("f", 0.25, "goal region radius on the opponent half, m"),
    "env.goal.x_lo": ("f", -0.45, "goal center sampling box on the opponent half"),
    "env.goal.x_hi": ("f", 0.45, "goal center sampling box on the opponent half"),
    "env.goal.y_lo": ("f", 0.30, "goal center sampling box on the opponent half"),
    "env.goal.y_hi": ("f", 1.10, "goal center sampling box on the opponent half"),
    # reward stack
    "reward.omega_task": ("f", 0.5, "task reward weight"),
    "reward.omega_style": ("f", 0.5, "style reward weight"),
    "reward.alpha_bat": ("f", 0.3, "pre-hit proximity weight; kept small so tracking the ball never rivals returning it"),
    "reward.alpha_goal": ("f", 3.0, "post-hit goal attraction weight"),
    "reward.alpha_acc": ("f", -0.01, "joint acceleration penalty weight (<= 0)"),
    "reward.alpha_dof": ("f", -0.01, "default-pose deviation penalty weight (<= 0)"),
    "reward.alpha_ar": ("f", -0.01, "action rate penalty weight (<= 0)"),
    "reward.alpha_ap": ("f", -0.05, "action magnitude penalty weight (<= 0)"),
    "reward.alpha_illegal": ("f", -1.0, "fixed penalty added on illegal termination"),
    "reward.sigma_bat": ("f", 0.5, "pre-hit proximity length scale, m"),
    "reward.sigma_goal": ("f", 0.5, "goal attraction length scale, m"),
    "reward.sigma_acc": ("f", 50.0, "acceleration penalty scale, rad/s^2; sized to the PD gains so only violent motion saturates the clamp"),
    "reward.sigma_dof": ("f", 1.0, "pose deviation penalty scale, rad"),
    "reward.sigma_ar": ("f", 1.0, "action rate penalty scale"),
    "reward.clamp_c": ("f", 4.0, "exponent clamp for penalty shaping"),
    "reward.literal_paper_forms": ("b", False, "use the unrepaired printed reward shapes (ablation)"),
    # domain randomization
    "rand.enabled": ("b", True, "sample DomainParams per episode"),
    "rand.table_restitution.lo": ("f", 0.85, ""),
    "rand.table_restitution.hi": ("f", 0.93, ""),
    "rand.table_friction.lo": ("f", 0.05, ""),
    "rand.table_friction.hi": ("f", 0.15, ""),
    "rand.bat_restitution.lo": ("f", 0.85, ""),
    "rand.bat_restitution.hi": ("f", 0.95, ""),
    "rand.bat_friction.lo": ("f", 0.05, ""),
    "rand.bat_friction.hi": ("f", 0.15, ""),
    "rand.gravity_scale.lo": ("f", 0.98, ""),
    "rand.gravity_scale.hi": ("f", 1.02, ""),
    "rand.kp.lo": ("f", 300.0, "per-joint PD stiffness range"),
    "rand.kp.hi": ("f", 500.0, ""),
    "rand.kd.lo": ("f", 30.0, "per-joint PD damping range"),
    "rand.kd.hi": ("f", 50.0, ""),
    "rand.noise_q.lo": ("f", 0.0, "joint position sensor noise std range, rad"),
    "rand.noise_q.hi": ("f", 0.002, ""),
    "rand.noise_qd.lo": ("f", 0.0, "joint velocity sensor noise std range, rad/s"),
    "rand.noise_qd.hi": ("f", 0.01, ""),
    "rand.noise_ball_pos.lo": ("f", 0.0, "ball position sensor noise std range, m"),
    "rand.noise_ball_pos.hi": ("f", 0.005, ""),
    "rand.noise_ball_vel.lo": ("f", 0.0, "ball velocity sensor noise std range, m/s"),
    "rand.noise_ball_vel.hi": ("f", 0.02, ""),
    "rand.delay.obs_max": ("i", 2, "observation delay drawn from {0..obs_max} policy steps"),
    "rand.delay.act_max": ("i", 2, "action delay drawn from {0..act_max} policy steps"),
    # teaching
    "teach.record_hz": ("i", 60, "recording rate for taught clips; must divide sim.hz"),
    "teach.kd_lin": ("f", 28.0, "Cartesian linear damping during dragging, N s/m"),
    "teach.kd_ang": ("f", 4.0, "Cartesian angular damping during dragging, N m s/rad"),
    "teach.kp_lin": ("f", 0.0, "Cartesian linear stiffness (zero while dragging)"),
    "teach.kp_ang": ("f", 0.0, "Cartesian angular stiffness (zero while dragging)"),
    "teach.wrench_cap": ("f", 60.0, "max wrench component magnitude allowed in scripts"),
    "teach.torque_cap": ("f", 120.0, "joint torque norm cap (singular configuration guard)"),
    "teach.jitter": ("f", 0.1, "relative wrench amplitude jitter for the shipped script set"),
    "teach.inertia": ("f", 2.0, "diagonal joint-space inertia used by the compliance integrator"),
    # demo dataset
    "data.factors": ("I", [1, 2, 3, 5], "speed augmentation factors"),
    "data.window_length": ("i", 4, "discriminator window length L, frames"),
    # networks
    "net.policy_hidden": ("I", [64, 64], "policy MLP hidden widths"),
    "net.value_hidden": ("I", [64, 64], "value MLP hidden widths"),
    "net.disc_hidden": ("I", [64, 64], "discriminator MLP hidden widths"),
    "net.log_std_init": ("f", -1.0, "initial per-dimension log std of the policy head"),
    # adversarial style machinery
    "amp.omega_gp": ("f", 5.0, "gradient penalty weight"),
    "amp.weight_decay": ("f", 1e-4, "discriminator weight decay"),
    "amp.eps_floor": ("f", 1e-4, "probability floor of the style reward mapping"),
    "amp.epochs": ("i", 2, "discriminator update epochs per iteration"),
    "amp.batch_real": ("i", 256, "real windows per discriminator batch"),
    "amp.batch_fake": ("i", 256, "fake windows per discriminator batch"),
    "amp.max_batches_per_epoch": ("i", 8, "cap on discriminator minibatches per epoch"),
    "amp.literal_log_form": ("b", False, "use raw -log(D) with clamping (ablation)"),
    "amp.unsquared_penalty": ("b", False, "penalize the unsquared input-gradient norm (ablation)"),
    # PPO
    "ppo.gamma": ("f", 0.99, "discount"),
    "ppo.lam": ("f", 0.95, "GAE lambda"),
    "ppo.clip": ("f", 0.2, "surrogate clip ratio"),
    "ppo.epochs": ("i", 4, "optimization epochs per iteration"),
    "ppo.minibatches": ("i", 4, "minibatches per epoch"),
    "ppo.lr_policy": ("f", 3e-4, ""),
    "ppo.lr_value": ("f", 3e-4, ""),
    "ppo.lr_disc": ("f", 1e-4, ""),
    "ppo.entropy_coef": ("f", 0.003, "entropy bonus coefficient"),
    "ppo.max_grad_norm": ("f", 0.5, "global gradient norm clip per network"),
    "ppo.horizon": ("i", 64, "rollout steps per environment per iteration"),
    "ppo.num_envs": ("i", 64, "parallel environments"),
    "ppo.iterations": ("i", 300, "training iterations"),
    # training logistics
    "train.ckpt_every": ("i", 50, "checkpoint interval, iterations"),
    "train.eval_every": ("i", 25, "holdout eval interval, iterations; 0 disables best-checkpoint tracking"),
    "train.eval_episodes": ("i", 64, "episodes per holdout eval"),
    # evaluation
    "eval.protocol": ("s", "success", "success | dtw | speed | sim2sim"),
    "eval.seeds": ("i", 10, "number of evaluation seeds"),
    "eval.spawns": ("i", 200, "episodes per seed"),
    "eval.dump_episodes": ("i", 0, "per-episode trajectory dumps to write"),
    "eval.dtw_episodes": ("i", 30, "episodes per direction for the dtw protocol"),
    # io
    "io.scripts": ("s", "", "force script directory; empty selects the packaged set"),
    "io.clips": ("s", "", "clip directory input"),
    "io.dataset": ("s", "", "augmented dataset directory; empty builds one in memory"),
    "io.ckpt": ("s", "", "checkpoint path"),
}


class RunConfig:
    """Typed view over merged key=value pairs with per-key provenance."""

    def __init__(self, values, provenance):
        self._values = values
        self._provenance = provenance

    def __getitem__(self, key):
        try:
            return self._values[key]
        except KeyError:
            raise ConfigError("unknown config key %r" % key) from None

    def __contains__(self, key):
        return key in self._values

    def provenance(self, key):
        return self._provenance[key]

    def to_dict(self):
        return dict(self._values)

    def with_overrides(self, overrides):
        """New config with a list of ``key=value`` strings applied on top."""
        values = dict(self._values)
        prov = dict(self._provenance)
        _apply_source(values, prov, _parse_override_pairs(overrides), "cli")
        return RunConfig(values, prov)

    def dump(self, subcommand="", stamp=None):
        """Render a frozen, reparseable copy of the full configuration."""
        stamp = stamp if stamp is not None else time.strftime("%Y-%m-%d %H:%M:%S")
        lines = ["# frozen config%s %s" % ((" for " + subcommand) if subcommand else "", stamp)]
        for key in SCHEMA:
            lines.append("%s = %s" % (key, _fmt(self._values[key])))
        lines.append("# provenance (keys not listed came from schema defaults):")
        for key in SCHEMA:
            if self._provenance[key] != "default":
                lines.append("#   %s <- %s" % (key, self._provenance[key]))
        return "\n".join(lines) + "\n"


def read_kv_file(path):
    """Parse a key=value text file into an ordered list of (key, raw, line_no)."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for idx, raw_line in enumerate(fh, start=1):
            line = raw_line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError("%s, line %d: expected key = value" % (path, idx))
            key, _, val = line.partition("=")
            out.append((key.strip(), val.strip(), idx))
    return out


def _check_and_parse(key, raw, source):
    if key not in SCHEMA:
        raise ConfigError("unknown config key %r (%s)" % (key, source))
    tag = SCHEMA[key][0]
    parser, tname = _TYPES[tag]
    try:
        return parser(raw) if isinstance(raw, str) else raw
    except (ValueError, TypeError):
        raise ConfigError(
            "key %r: expected %s, got %r (%s)" % (key, tname, raw, source)
        ) from None


def _apply_source(values, prov, pairs, source):
    for key, raw, line in pairs:
        where = source if line is None else "%s, line %d" % (source, line)
        values[key] = _check_and_parse(key, raw, where)
        prov[key] = source


def _parse_override_pairs(overrides):
    pairs = []
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError("override %r is not of the form key=value (cli)" % item)
        key, _, val = item.partition("=")
        pairs.append((key.strip(), val.strip(), None))
    return pairs


def parse_config(default_path=None, user_path=None, overrides=()):
    """Merge schema defaults, optional files, and cli overrides into a RunConfig.

    Later sources win. Missing files raise; unknown keys and type mismatches
    raise ConfigError naming the key and the source it came from.
    """
    values = {key: spec[1] for key, spec in SCHEMA.items()}
    prov = {key: "default" for key in SCHEMA}
    for path, label in ((default_path, "file:%s"), (user_path, "file:%s")):
        if path:
            if not os.path.exists(path):
                raise ConfigError("config file not found: %s" % path)
            _apply_source(values, prov, read_kv_file(path), label % path)
    _apply_source(values, prov, _parse_override_pairs(overrides), "cli")
    return RunConfig(values, prov)


def defaults_text():
    """Schema defaults rendered as a config file (shipped as data/defaults.cfg)."""
    lines = ["# full default configuration; every known key with its default value"]
    for key, (tag, default, doc) in SCHEMA.items():
        if doc:
            lines.append("# %s" % doc)
        lines.append("%s = %s" % (key, _fmt(default)))
    return "\n".join(lines) + "\n"
