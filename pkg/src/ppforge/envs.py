"""Table-tennis striking environment with domain randomization.

One episode: a ball is served toward the robot half, the arm tries to
return it to a sampled goal spot on the opponent half. Policy actions are
joint-target deltas at 60 Hz; physics and PD control run at 120 Hz.

Policy observation (26): [q(6), qdot(6), prev_action(6), ball_pos(3),
ball_vel(3), goal_xy(2)], with sensor noise and delay on the q/qdot/ball
channels. Critic observation (52): the exact undelayed noise-free version
of the same 26 values, then [bounce_own, bounce_opp, has_been_hit,
gravity_scale, table_restitution, table_friction, bat_restitution,
bat_friction, kp(6), kd(6), noise_q, noise_qd, noise_ball_pos,
noise_ball_vel, obs_delay, act_delay].
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .arm import ArmModel, TableSlab, load_arm_params
from .ball import (EVENT_FLOOR, EVENT_NET, BackendSpec, BallState, SpawnSpec,
                   WorldParams, is_out_of_play, resolve_bat_contact,
                   spawn_ball, step_ball, sweep_bat_contact)

POLICY_OBS_DIM = 26
PRIV_OBS_DIM = 52
ACTION_DIM = 6

# policy observation channel slices
OBS_Q = slice(0, 6)
OBS_QD = slice(6, 12)
OBS_PREV_ACTION = slice(12, 18)
OBS_BALL_POS = slice(18, 21)
OBS_BALL_VEL = slice(21, 24)
OBS_GOAL = slice(24, 26)

R_BAD_ACTION = "bad_action"
R_SELF_COLLISION = "self_collision"
R_ARM_TABLE = "arm_table"
R_ARM_BODY = "arm_body_contact"
R_NET = "net_hit"
R_DOUBLE_BOUNCE = "double_bounce"
R_OWN_SIDE = "own_side_after_hit"
R_RETURNED = "returned"
R_BALL_OUT = "ball_out"
R_MAX_STEPS = "max_steps"

# rally faults that carry the fixed penalty
ILLEGAL_REASONS = frozenset({
    R_SELF_COLLISION, R_ARM_TABLE, R_ARM_BODY, R_NET, R_DOUBLE_BOUNCE,
    R_OWN_SIDE,
})

TERMINATION_REASONS = (
    R_BAD_ACTION, R_SELF_COLLISION, R_ARM_TABLE, R_ARM_BODY, R_NET,
    R_DOUBLE_BOUNCE, R_OWN_SIDE, R_RETURNED, R_BALL_OUT, R_MAX_STEPS,
)


# ---- rewards -----------------------------------------------------------------

@dataclass(frozen=True)
class RewardParams:
    alpha_bat: float = 0.3
    alpha_goal: float = 3.0
    sigma_bat: float = 0.5
    sigma_goal: float = 0.5
    alpha_acc: float = -0.01
    alpha_dof: float = -0.01
    alpha_ar: float = -0.01
    alpha_ap: float = -0.05
    alpha_illegal: float = -1.0
    sigma_acc: float = 50.0
    sigma_dof: float = 1.0
    sigma_ar: float = 1.0
    clamp_c: float = 4.0
    omega_task: float = 0.5
    omega_style: float = 0.5
    literal_forms: bool = False

    @staticmethod
    def from_config(cfg) -> "RewardParams":
        return RewardParams(
            alpha_bat=cfg["reward.alpha_bat"],
            alpha_goal=cfg["reward.alpha_goal"],
            sigma_bat=cfg["reward.sigma_bat"],
            sigma_goal=cfg["reward.sigma_goal"],
            alpha_acc=cfg["reward.alpha_acc"],
            alpha_dof=cfg["reward.alpha_dof"],
            alpha_ar=cfg["reward.alpha_ar"],
            alpha_ap=cfg["reward.alpha_ap"],
            alpha_illegal=cfg["reward.alpha_illegal"],
            sigma_acc=cfg["reward.sigma_acc"],
            sigma_dof=cfg["reward.sigma_dof"],
            sigma_ar=cfg["reward.sigma_ar"],
            clamp_c=cfg["reward.clamp_c"],
            omega_task=cfg["reward.omega_task"],
            omega_style=cfg["reward.omega_style"],
            literal_forms=cfg["reward.literal_paper_forms"],
        )


@dataclass
class RewardBreakdown:
    r_hit: float = 0.0
    r_acc: float = 0.0
    r_dof: float = 0.0
    r_ar: float = 0.0
    r_ap: float = 0.0
    r_illegal: float = 0.0
    r_style: float = 0.0

    @property
    def r_task_total(self):
        return (self.r_hit + self.r_acc + self.r_dof + self.r_ar
                + self.r_ap + self.r_illegal)

    def total(self, omega_task, omega_style):
        return omega_task * self.r_task_total + omega_style * self.r_style


# exponent guard for the literal reward shapes, which are unbounded as printed
_LITERAL_EXP_CAP = 30.0


def _attract(dist, sigma, literal):
    if literal:
        return math.exp(min(dist / sigma, _LITERAL_EXP_CAP))
    return math.exp(-dist / sigma)


def _penalty(mag, sigma, alpha, clamp_c, literal):
    if literal:
        return alpha * math.exp(min(mag / sigma, _LITERAL_EXP_CAP))
    return alpha * (math.exp(min(mag / sigma, clamp_c)) - 1.0)


def compute_rewards(rp: RewardParams, q, qdot, qddot, q_default, action,
                    prev_action, bat_y, ball_y, ball_xy, goal_xy,
                    has_been_hit, illegal) -> RewardBreakdown:
    """Task reward components for one step; pure function of its arguments.

    Before the first bat contact the hit term attracts the bat's y toward
    the ball's y; afterward it attracts the ball's table-plane position
    toward the goal spot.
    """
    lit = rp.literal_forms
    b = RewardBreakdown()
    if has_been_hit:
        d = math.hypot(ball_xy[0] - goal_xy[0], ball_xy[1] - goal_xy[1])
        b.r_hit = rp.alpha_goal * _attract(d, rp.sigma_goal, lit)
    else:
        b.r_hit = rp.alpha_bat * _attract(abs(bat_y - ball_y), rp.sigma_bat, lit)
    b.r_acc = _penalty(float(np.linalg.norm(qddot)), rp.sigma_acc,
                       rp.alpha_acc, rp.clamp_c, lit)
    b.r_dof = _penalty(float(np.linalg.norm(np.asarray(q) - np.asarray(q_default))),
                       rp.sigma_dof, rp.alpha_dof, rp.clamp_c, lit)
    b.r_ar = _penalty(float(np.linalg.norm(np.asarray(action) - np.asarray(prev_action))),
                      rp.sigma_ar, rp.alpha_ar, rp.clamp_c, lit)
    b.r_ap = rp.alpha_ap * float(np.max(np.abs(action)))
    b.r_illegal = rp.alpha_illegal if illegal else 0.0
    return b


# ---- per-episode domain sample -------------------------------------------------

@dataclass
class DomainParams:
    world: WorldParams
    kp: np.ndarray
    kd: np.ndarray
    noise_q: float
    noise_qd: float
    noise_ball_pos: float
    noise_ball_vel: float
    obs_delay: int
    act_delay: int
    gravity_scale: float


@dataclass(frozen=True)
class RandSpec:
    enabled: bool
    table_restitution: tuple
    table_friction: tuple
    bat_restitution: tuple
    bat_friction: tuple
    gravity_scale: tuple
    kp: tuple
    kd: tuple
    noise_q: tuple
    noise_qd: tuple
    noise_ball_pos: tuple
    noise_ball_vel: tuple
    obs_delay_max: int
    act_delay_max: int

    @staticmethod
    def from_config(cfg) -> "RandSpec":
        def rng_pair(name):
            lo, hi = cfg["rand.%s.lo" % name], cfg["rand.%s.hi" % name]
            if hi < lo:
                raise ValueError("rand.%s range is inverted" % name)
            return (lo, hi)
        return RandSpec(
            enabled=cfg["rand.enabled"],
            table_restitution=rng_pair("table_restitution"),
            table_friction=rng_pair("table_friction"),
            bat_restitution=rng_pair("bat_restitution"),
            bat_friction=rng_pair("bat_friction"),
            gravity_scale=rng_pair("gravity_scale"),
            kp=rng_pair("kp"),
            kd=rng_pair("kd"),
            noise_q=rng_pair("noise_q"),
            noise_qd=rng_pair("noise_qd"),
            noise_ball_pos=rng_pair("noise_ball_pos"),
            noise_ball_vel=rng_pair("noise_ball_vel"),
            obs_delay_max=cfg["rand.delay.obs_max"],
            act_delay_max=cfg["rand.delay.act_max"],
        )


def randomize_domain(rng, spec: RandSpec, base_world: WorldParams,
                     kp_nominal, kd_nominal) -> DomainParams:
    """Per-episode physics/control/sensing sample. Fixed draw order."""
    kp_nominal = np.asarray(kp_nominal, dtype=float)
    kd_nominal = np.asarray(kd_nominal, dtype=float)
    if not spec.enabled:
        return DomainParams(world=base_world, kp=kp_nominal.copy(),
                            kd=kd_nominal.copy(), noise_q=0.0, noise_qd=0.0,
                            noise_ball_pos=0.0, noise_ball_vel=0.0,
                            obs_delay=0, act_delay=0, gravity_scale=1.0)
    u = rng.uniform
    table_rest = u(*spec.table_restitution)
    table_fric = u(*spec.table_friction)
    bat_rest = u(*spec.bat_restitution)
    bat_fric = u(*spec.bat_friction)
    gscale = u(*spec.gravity_scale)
    kp = u(spec.kp[0], spec.kp[1], size=6)
    kd = u(spec.kd[0], spec.kd[1], size=6)
    nq = u(*spec.noise_q)
    nqd = u(*spec.noise_qd)
    nbp = u(*spec.noise_ball_pos)
    nbv = u(*spec.noise_ball_vel)
    obs_delay = int(rng.integers(0, spec.obs_delay_max + 1))
    act_delay = int(rng.integers(0, spec.act_delay_max + 1))
    world = replace(base_world, gravity=base_world.gravity * gscale,
                    table_restitution=table_rest, table_friction=table_fric,
                    bat_restitution=bat_rest, bat_friction=bat_fric)
    return DomainParams(world=world, kp=kp, kd=kd, noise_q=nq, noise_qd=nqd,
                        noise_ball_pos=nbp, noise_ball_vel=nbv,
                        obs_delay=obs_delay, act_delay=act_delay,
                        gravity_scale=gscale)


# ---- environment ----------------------------------------------------------------

@dataclass
class StepResult:
    obs_policy: np.ndarray
    obs_priv: np.ndarray
    reward: RewardBreakdown
    done: bool
    reason: str
    success: bool
    state_qqd: np.ndarray        # post-step (q, qdot), feeds style windows


class PingPongEnv:
    """Single-rally environment; one instance owns one RNG stream."""

    def __init__(self, cfg, model: ArmModel = None, rng=None, backend=None):
        self.cfg = cfg
        self.model = model if model is not None else ArmModel(load_arm_params())
        self.rng = rng if rng is not None else np.random.default_rng(cfg["run.seed"])
        self.base_world = WorldParams.from_config(cfg)
        self.backend = backend if backend is not None else cfg["backend"]
        self.spec = BackendSpec.for_backend(self.backend, cfg)
        self.spawn_spec = SpawnSpec.from_config(cfg)
        self.rand_spec = RandSpec.from_config(cfg)
        self.rp = RewardParams.from_config(cfg)
        sim_hz = cfg["sim.hz"]
        self.decimation = cfg["sim.decimation"]
        if sim_hz <= 0 or self.decimation <= 0:
            raise ValueError("sim.hz and sim.decimation must be positive")
        self.dt_phys = 1.0 / sim_hz
        self.delta_max = cfg["action.delta_max"]
        self.max_steps = cfg["env.episode_max_steps"]
        self.goal_radius = cfg["env.goal.radius"]
        self.goal_box = (cfg["env.goal.x_lo"], cfg["env.goal.x_hi"],
                         cfg["env.goal.y_lo"], cfg["env.goal.y_hi"])
        self.kp_nominal = np.full(6, cfg["ctrl.kp"])
        self.kd_nominal = np.full(6, cfg["ctrl.kd"])
        self.table_slab = TableSlab(self.base_world.x_half,
                                    self.base_world.y_half,
                                    self.base_world.table_height)
        # a ball receding past the arm base can never be struck
        self._miss_y = float(self.model.params.offsets[0, 1]) + 0.10
        self.dom = None
        self._done = True

    # -- observation assembly --

    def _policy_view_clean(self):
        v = np.empty(POLICY_OBS_DIM)
        v[OBS_Q] = self.arm.q
        v[OBS_QD] = self.arm.qdot
        v[OBS_PREV_ACTION] = self.prev_action
        v[OBS_BALL_POS] = self.ball.position
        v[OBS_BALL_VEL] = self.ball.velocity
        v[OBS_GOAL] = self.goal_xy
        return v

    def apply_delays_and_noise(self, clean_view):
        """Push the clean view, pop the delayed one, add sensor noise.

        The queue holds clean snapshots so noise is drawn fresh at pop; with
        zero delay and zero noise stds this is the identity.
        """
        self._obs_queue.append(clean_view)
        view = self._obs_queue[0].copy()
        dom = self.dom
        draws = self.rng.standard_normal(18)
        view[OBS_Q] += dom.noise_q * draws[0:6]
        view[OBS_QD] += dom.noise_qd * draws[6:12]
        view[OBS_BALL_POS] += dom.noise_ball_pos * draws[12:15]
        view[OBS_BALL_VEL] += dom.noise_ball_vel * draws[15:18]
        return view

    def _priv_view(self):
        dom = self.dom
        v = np.empty(PRIV_OBS_DIM)
        v[:POLICY_OBS_DIM] = self._policy_view_clean()
        w = dom.world
        v[26] = self.ball.bounce_count_own
        v[27] = self.ball.bounce_count_opp
        v[28] = 1.0 if self.ball.has_been_hit else 0.0
        v[29] = dom.gravity_scale
        v[30] = w.table_restitution
        v[31] = w.table_friction
        v[32] = w.bat_restitution
        v[33] = w.bat_friction
        v[34:40] = dom.kp
        v[40:46] = dom.kd
        v[46] = dom.noise_q
        v[47] = dom.noise_qd
        v[48] = dom.noise_ball_pos
        v[49] = dom.noise_ball_vel
        v[50] = dom.obs_delay
        v[51] = dom.act_delay
        return v

    # -- lifecycle --

    def reset(self):
        """Sample domain, goal, and serve; returns (policy_obs, priv_obs)."""
        self.dom = randomize_domain(self.rng, self.rand_spec, self.base_world,
                                    self.kp_nominal, self.kd_nominal)
        gx_lo, gx_hi, gy_lo, gy_hi = self.goal_box
        self.goal_xy = np.array((self.rng.uniform(gx_lo, gx_hi),
                                 self.rng.uniform(gy_lo, gy_hi)))
        self.ball = spawn_ball(self.rng, self.spawn_spec, self.dom.world)
        self.arm = self.model.make_state(self.model.params.default_pose.copy())
        self.prev_action = np.zeros(ACTION_DIM)
        self.step_count = 0
        self._own_at_hit = 0
        self._opp_at_hit = 0
        self._rally_won = False
        self._done = False
        self._act_queue = deque(
            [np.zeros(ACTION_DIM)] * self.dom.act_delay,
            maxlen=self.dom.act_delay + 1)
        v0 = self._policy_view_clean()
        self._obs_queue = deque([v0.copy() for _ in range(self.dom.obs_delay)],
                                maxlen=self.dom.obs_delay + 1)
        obs = self.apply_delays_and_noise(v0)
        priv = self._priv_view()
        self._last_obs = (obs, priv)
        return obs, priv

    def _advance_ball(self, dt):
        """Ball flight over one physics substep, bat contact included."""
        ball = self.ball
        arm = self.arm
        world = self.dom.world
        if not ball.resting:
            gap = ball.position - arm.bat_pos
            near = float(gap @ gap) < 1.0
            tau = None
            if near:
                tau = sweep_bat_contact(ball, world, arm.bat_pos,
                                        arm.bat_normal, arm.bat_vel, dt)
            if tau is not None:
                if tau > 0:
                    ball = step_ball(ball, world, self.spec, tau)
                clean_flight = (not ball.resting
                                and ball.last_event not in (EVENT_NET, EVENT_FLOOR))
                if clean_flight:
                    was_hit = ball.has_been_hit
                    ball = resolve_bat_contact(
                        ball, arm.bat_pos + arm.bat_vel * tau,
                        arm.bat_normal, arm.bat_vel, world)
                    if ball.has_been_hit and not was_hit:
                        self._own_at_hit = ball.bounce_count_own
                        self._opp_at_hit = ball.bounce_count_opp
                rem = dt - (tau if tau > 0 else 0.0)
                if rem > 1e-12 and not ball.resting:
                    ball = step_ball(ball, world, self.spec, rem)
            else:
                ball = step_ball(ball, world, self.spec, dt)
        else:
            ball = step_ball(ball, world, self.spec, dt)
        self.ball = ball

    def _check_termination(self):
        ball = self.ball
        caps = self.model.capsules_world(self.arm.q)
        selfc, tablec = self.model.check_collisions(self.arm, self.table_slab,
                                                    caps=caps)
        if selfc:
            return R_SELF_COLLISION
        if tablec:
            return R_ARM_TABLE
        if self.model.ball_contact(self.arm.q, ball.position,
                                   self.dom.world.ball_radius, caps=caps):
            return R_ARM_BODY
        if ball.last_event == EVENT_NET:
            # Net contact is the robot's fault only on its own return; an
            # incoming serve that clips the net is a dead ball, not a foul.
            return R_NET if ball.has_been_hit else R_BALL_OUT
        if not ball.has_been_hit and ball.bounce_count_own >= 2:
            return R_DOUBLE_BOUNCE
        if ball.has_been_hit and ball.bounce_count_own > self._own_at_hit:
            return R_OWN_SIDE
        if ball.has_been_hit and ball.bounce_count_opp > self._opp_at_hit:
            # First bounce on the opponent half wins the rally.  The episode
            # keeps running (so the goal term keeps scoring the landing) until
            # the opponent would have had to play it: the second bounce.
            if ball.bounce_count_opp > self._opp_at_hit + 1:
                return R_RETURNED
            self._rally_won = True
        if not ball.has_been_hit and ball.bounce_count_opp >= 1:
            return R_BALL_OUT
        if (not ball.has_been_hit and ball.velocity[1] < 0.0
                and ball.position[1] < self._miss_y):
            # Irretrievably behind the arm: end the miss now instead of
            # letting the episode keep collecting proximity reward.
            return R_BALL_OUT
        if ball.resting or ball.last_event == EVENT_FLOOR:
            return R_RETURNED if self._rally_won else R_BALL_OUT
        if is_out_of_play(ball, self.dom.world):
            return R_RETURNED if self._rally_won else R_BALL_OUT
        return None

    def step(self, action) -> StepResult:
        if self._done:
            raise RuntimeError("step() called on a finished episode; reset first")
        self.step_count += 1
        a_in = np.asarray(action, dtype=float).reshape(ACTION_DIM)
        if not np.all(np.isfinite(a_in)):
            self._done = True
            state_qqd = np.concatenate([self.arm.q, self.arm.qdot])
            return StepResult(self._last_obs[0], self._last_obs[1],
                              RewardBreakdown(), True, R_BAD_ACTION, False,
                              state_qqd)
        a = np.clip(a_in, -1.0, 1.0)
        self._act_queue.append(a)
        effective = self._act_queue[0]
        p = self.model.params
        q_target = np.clip(self.arm.q + effective * self.delta_max,
                           p.joint_limits[:, 0], p.joint_limits[:, 1])
        reason = None
        for _ in range(self.decimation):
            self.arm = self.model.step_pd(self.arm, q_target, self.dom.kp,
                                          self.dom.kd, self.dt_phys)
            self._advance_ball(self.dt_phys)
            reason = self._check_termination()
            if reason is not None:
                break
        if reason is None and self.step_count >= self.max_steps:
            reason = R_MAX_STEPS
        done = reason is not None
        illegal = reason in ILLEGAL_REASONS
        breakdown = compute_rewards(
            self.rp, self.arm.q, self.arm.qdot, self.arm.qddot,
            p.default_pose, a, self.prev_action,
            self.arm.bat_pos[1], self.ball.position[1],
            self.ball.position[:2], self.goal_xy,
            self.ball.has_been_hit, illegal)
        self.prev_action = a
        obs = self.apply_delays_and_noise(self._policy_view_clean())
        priv = self._priv_view()
        self._last_obs = (obs, priv)
        self._done = done
        state_qqd = np.concatenate([self.arm.q, self.arm.qdot])
        return StepResult(obs, priv, breakdown, done, reason,
                          self._rally_won, state_qqd)

    # -- snapshots for bit-exact resume --

    def get_state(self):
        dom = self.dom
        w = dom.world
        return {
            "q": self.arm.q.copy(),
            "qdot": self.arm.qdot.copy(),
            "qddot": self.arm.qddot.copy(),
            "prev_action": self.prev_action.copy(),
            "goal_xy": self.goal_xy.copy(),
            "ball_position": self.ball.position.copy(),
            "ball_velocity": self.ball.velocity.copy(),
            "ball_flags": np.array([
                self.ball.bounce_count_own, self.ball.bounce_count_opp,
                1.0 if self.ball.has_been_hit else 0.0,
                1.0 if self.ball.resting else 0.0,
                1.0 if self.ball.in_contact else 0.0,
                self._own_at_hit, self._opp_at_hit,
                self.step_count, 1.0 if self._done else 0.0,
                1.0 if self._rally_won else 0.0]),
            "last_event": self.ball.last_event,
            "dom_scalars": np.array([
                w.gravity, w.table_restitution, w.table_friction,
                w.bat_restitution, w.bat_friction, dom.gravity_scale,
                dom.noise_q, dom.noise_qd, dom.noise_ball_pos,
                dom.noise_ball_vel, dom.obs_delay, dom.act_delay]),
            "dom_kp": dom.kp.copy(),
            "dom_kd": dom.kd.copy(),
            "act_queue": np.array(list(self._act_queue)).reshape(len(self._act_queue), -1)
                         if len(self._act_queue) else np.zeros((0, ACTION_DIM)),
            "obs_queue": np.array(list(self._obs_queue)).reshape(len(self._obs_queue), -1)
                         if len(self._obs_queue) else np.zeros((0, POLICY_OBS_DIM)),
            "last_obs_policy": self._last_obs[0].copy(),
            "last_obs_priv": self._last_obs[1].copy(),
            "rng_state": self.rng.bit_generator.state,
        }

    def set_state(self, st):
        flags = st["ball_flags"]
        ds = st["dom_scalars"]
        world = replace(self.base_world, gravity=float(ds[0]),
                        table_restitution=float(ds[1]),
                        table_friction=float(ds[2]),
                        bat_restitution=float(ds[3]),
                        bat_friction=float(ds[4]))
        self.dom = DomainParams(
            world=world, kp=np.asarray(st["dom_kp"], dtype=float),
            kd=np.asarray(st["dom_kd"], dtype=float),
            noise_q=float(ds[6]), noise_qd=float(ds[7]),
            noise_ball_pos=float(ds[8]), noise_ball_vel=float(ds[9]),
            obs_delay=int(ds[10]), act_delay=int(ds[11]),
            gravity_scale=float(ds[5]))
        self.arm = self.model.make_state(np.asarray(st["q"], dtype=float),
                                         np.asarray(st["qdot"], dtype=float),
                                         np.asarray(st["qddot"], dtype=float))
        self.prev_action = np.asarray(st["prev_action"], dtype=float)
        self.goal_xy = np.asarray(st["goal_xy"], dtype=float)
        self.ball = BallState(
            position=np.asarray(st["ball_position"], dtype=float),
            velocity=np.asarray(st["ball_velocity"], dtype=float),
            bounce_count_own=int(flags[0]), bounce_count_opp=int(flags[1]),
            has_been_hit=bool(flags[2]), last_event=st["last_event"],
            resting=bool(flags[3]), in_contact=bool(flags[4]))
        self._own_at_hit = int(flags[5])
        self._opp_at_hit = int(flags[6])
        self.step_count = int(flags[7])
        self._done = bool(flags[8])
        self._rally_won = bool(flags[9])
        aq = np.asarray(st["act_queue"], dtype=float).reshape(-1, ACTION_DIM)
        self._act_queue = deque([row.copy() for row in aq],
                                maxlen=self.dom.act_delay + 1)
        oq = np.asarray(st["obs_queue"], dtype=float).reshape(-1, POLICY_OBS_DIM)
        self._obs_queue = deque([row.copy() for row in oq],
                                maxlen=self.dom.obs_delay + 1)
        self._last_obs = (np.asarray(st["last_obs_policy"], dtype=float),
                          np.asarray(st["last_obs_priv"], dtype=float))
        self.rng.bit_generator.state = st["rng_state"]


class VectorEnv:
    """Fixed batch of envs with auto-reset on episode end."""

    def __init__(self, cfg, n_envs, seed, model: ArmModel = None, backend=None):
        if n_envs < 1:
            raise ValueError("need at least one env")
        self.model = model if model is not None else ArmModel(load_arm_params())
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        streams = seed.spawn(n_envs)
        self.envs = [PingPongEnv(cfg, self.model, np.random.Generator(
            np.random.PCG64(s)), backend) for s in streams]
        self.n_envs = n_envs

    def reset_all(self):
        obs = np.empty((self.n_envs, POLICY_OBS_DIM))
        priv = np.empty((self.n_envs, PRIV_OBS_DIM))
        for i, env in enumerate(self.envs):
            obs[i], priv[i] = env.reset()
        return obs, priv

    def step(self, actions):
        """Steps every env; finished envs are reset and report the fresh obs."""
        actions = np.asarray(actions, dtype=float)
        obs = np.empty((self.n_envs, POLICY_OBS_DIM))
        priv = np.empty((self.n_envs, PRIV_OBS_DIM))
        states = np.empty((self.n_envs, 12))
        dones = np.zeros(self.n_envs, dtype=bool)
        rewards = []
        reasons = []
        successes = np.zeros(self.n_envs, dtype=bool)
        for i, env in enumerate(self.envs):
            res = env.step(actions[i])
            rewards.append(res.reward)
            dones[i] = res.done
            reasons.append(res.reason)
            successes[i] = res.success
            states[i] = res.state_qqd
            if res.done:
                obs[i], priv[i] = env.reset()
            else:
                obs[i], priv[i] = res.obs_policy, res.obs_priv
        return obs, priv, rewards, dones, reasons, successes, states

    def get_states(self):
        return [env.get_state() for env in self.envs]

    def set_states(self, states):
        if len(states) != self.n_envs:
            raise ValueError("snapshot count does not match env count")
        for env, st in zip(self.envs, states):
            env.set_state(st)
