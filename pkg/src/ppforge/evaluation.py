"""Evaluation protocols: success rate, style distance, speed buckets, sim2sim.

Success: a rally counts when the first table bounce after the robot's hit
lands on the opponent half. Style distance: dynamic time warping between
the episode's joint-pose sequence and the closest unaugmented demo clip of
the commanded direction.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .arm import ArmModel, load_arm_params
from .envs import PingPongEnv
from .motion import MotionClip


def dtw_distance(a, b) -> float:
    """Unnormalized DTW with unit steps down/right/diagonal, Euclidean cost."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("sequences must share the feature dimension")
    ta, tb = len(a), len(b)
    if ta == 0 or tb == 0:
        raise ValueError("empty sequence")
    diff = a[:, None, :] - b[None, :, :]
    cost = np.sqrt((diff * diff).sum(axis=2))
    prev = np.full(tb + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, ta + 1):
        cur = np.empty(tb + 1)
        cur[0] = np.inf
        ci = cost[i - 1]
        for j in range(1, tb + 1):
            cur[j] = ci[j - 1] + min(prev[j], cur[j - 1], prev[j - 1])
        prev = cur
    return float(prev[tb])


def dtw_distance_normalized(a, b) -> float:
    """DTW divided by the summed sequence lengths."""
    return dtw_distance(a, b) / (len(np.atleast_2d(a)) + len(np.atleast_2d(b)))


# ---- rollout harness -----------------------------------------------------------

@dataclass
class EpisodeResult:
    success: bool
    reason: str
    steps: int
    spawn_speed: float
    poses: np.ndarray             # reset pose plus one row per step
    trajectory: list = None       # optional (t, q(6), ball(3)) rows


def run_episode(env: PingPongEnv, actor, collect_traj=False) -> EpisodeResult:
    """actor(obs, env) -> action; actors may carry per-episode state via
    an optional begin_episode(env) hook."""
    obs, _ = env.reset()
    if hasattr(actor, "begin_episode"):
        actor.begin_episode(env)
    spawn_speed = float(np.linalg.norm(env.ball.velocity))
    poses = [env.arm.q.copy()]
    traj = [] if collect_traj else None
    t = 0.0
    dt = env.dt_phys * env.decimation
    if collect_traj:
        traj.append((t, env.arm.q.copy(), env.ball.position.copy()))
    steps = 0
    while True:
        action = actor(obs, env)
        res = env.step(action)
        steps += 1
        t += dt
        poses.append(env.arm.q.copy())
        if collect_traj:
            traj.append((t, env.arm.q.copy(), env.ball.position.copy()))
        obs = res.obs_policy
        if res.done:
            return EpisodeResult(res.success, res.reason, steps, spawn_speed,
                                 np.array(poses), traj)


def policy_actor(snapshot):
    """Deterministic actor closure over a trained policy."""
    def act(obs, env):
        return snapshot.act(obs)
    return act


def zero_actor(obs, env):
    return np.zeros(6)


# ---- protocols -------------------------------------------------------------------

@dataclass
class EvalReport:
    method: str
    attempts: int                 # episodes per seed
    per_seed_successes: list
    bucket: str = ""
    backend: str = ""

    @property
    def seeds(self):
        return len(self.per_seed_successes)

    @property
    def mean_success(self):
        return float(np.mean(self.per_seed_successes))

    @property
    def success_rate(self):
        return self.mean_success / self.attempts if self.attempts else 0.0


@dataclass
class DtwReport:
    direction: str
    distances: list
    distances_normalized: list

    @property
    def episodes(self):
        return len(self.distances)

    @property
    def mean_dtw(self):
        return float(np.mean(self.distances))

    @property
    def mean_dtw_normalized(self):
        return float(np.mean(self.distances_normalized))


def _eval_seed_streams(cfg, n_seeds):
    ss = np.random.SeedSequence([cfg["run.seed"], 0xE7A1])
    return ss.spawn(n_seeds)


def make_env(cfg, seed_or_ss, model=None, backend=None) -> PingPongEnv:
    model = model if model is not None else ArmModel(load_arm_params())
    if isinstance(seed_or_ss, np.random.SeedSequence):
        rng = np.random.Generator(np.random.PCG64(seed_or_ss))
    else:
        rng = np.random.default_rng(seed_or_ss)
    return PingPongEnv(cfg, model, rng, backend=backend)


def eval_success(actor, cfg, method, seeds=None, spawns=None, backend=None,
                 model=None, bucket="", episode_hook=None) -> EvalReport:
    """Success over seeds x spawns; the per-seed env owns one RNG stream."""
    n_seeds = seeds if seeds is not None else cfg["eval.seeds"]
    n_spawns = spawns if spawns is not None else cfg["eval.spawns"]
    model = model if model is not None else ArmModel(load_arm_params())
    per_seed = []
    for ss in _eval_seed_streams(cfg, n_seeds):
        env = make_env(cfg, ss, model, backend)
        wins = 0
        for _ in range(n_spawns):
            result = run_episode(env, actor)
            wins += int(result.success)
            if episode_hook is not None:
                episode_hook(result)
        per_seed.append(wins)
    return EvalReport(method=method, attempts=n_spawns,
                      per_seed_successes=per_seed, bucket=bucket,
                      backend=backend or cfg["backend"])


# per-direction spawn-aim and goal boxes; the ball arrives offset so the
# labeled swing is the natural return, goals sit on the matching side
DIRECTION_OVERRIDES = {
    "forward": {"env.spawn.target_x_lo": -0.10, "env.spawn.target_x_hi": 0.10,
                "env.goal.x_lo": -0.12, "env.goal.x_hi": 0.12},
    "leftward": {"env.spawn.target_x_lo": 0.05, "env.spawn.target_x_hi": 0.30,
                 "env.goal.x_lo": -0.44, "env.goal.x_hi": -0.22},
    "rightward": {"env.spawn.target_x_lo": -0.30, "env.spawn.target_x_hi": -0.05,
                  "env.goal.x_lo": 0.22, "env.goal.x_hi": 0.44},
}


def directional_dtw_eval(actor, cfg, clips, episodes=None, model=None,
                         backend=None):
    """Mean DTW per direction against the closest same-direction demo clip.

    clips: iterable of MotionClip; only unaugmented (k=1) clips are used as
    references. Episode pose sequences start from the reset pose so both
    sequences share their anchor.
    """
    n_episodes = episodes if episodes is not None else cfg["eval.dtw_episodes"]
    model = model if model is not None else ArmModel(load_arm_params())
    reports = []
    for direction in ("forward", "leftward", "rightward"):
        refs = [c for c in clips
                if c.direction == direction and c.speed_factor == 1]
        if not refs:
            raise ValueError("no unaugmented %s clips to compare against"
                             % direction)
        over = DIRECTION_OVERRIDES[direction]
        dcfg = cfg.with_overrides(["%s=%s" % (k, v) for k, v in over.items()])
        ss = np.random.SeedSequence([cfg["run.seed"], 0xD7B2,
                                     hash_direction(direction)])
        env = make_env(dcfg, ss, model, backend)
        dists, dists_n = [], []
        for _ in range(n_episodes):
            result = run_episode(env, actor)
            best = min(dtw_distance(result.poses, ref.poses) for ref in refs)
            best_n = min(dtw_distance_normalized(result.poses, ref.poses)
                         for ref in refs)
            dists.append(best)
            dists_n.append(best_n)
        reports.append(DtwReport(direction, dists, dists_n))
    return reports


def hash_direction(direction):
    return {"forward": 1, "leftward": 2, "rightward": 3}[direction]


SPEED_BUCKETS = {"low": (4.0, 4.8), "high": (5.8, 6.6)}


def speed_bucket_eval(actor, cfg, method, seeds=None, spawns=None, model=None,
                      backend=None, buckets=None):
    reports = []
    for bucket, (lo, hi) in (buckets or SPEED_BUCKETS).items():
        bcfg = cfg.with_overrides(["env.spawn.speed_lo=%s" % lo,
                                   "env.spawn.speed_hi=%s" % hi])
        reports.append(eval_success(actor, bcfg, method, seeds, spawns,
                                    backend, model, bucket=bucket))
    return reports


def sim2sim_eval(actor, cfg, method, seeds=None, spawns=None, model=None):
    """Same policy, same protocol, both dynamics backends."""
    rep_a = eval_success(actor, cfg, method, seeds, spawns, "A", model)
    rep_b = eval_success(actor, cfg, method, seeds, spawns, "B", model)
    return [rep_a, rep_b]


# ---- plot data -----------------------------------------------------------------

SUCCESS_HEADER = "method,attempts,mean_success,success_rate"
DTW_HEADER = "direction,episodes,mean_dtw,mean_dtw_normalized"
SPEED_HEADER = "method,bucket,attempts,mean_success,success_rate"
SIM2SIM_HEADER = "backend,attempts,mean_success,success_rate"
TRAJ_HEADER = "time,q1,q2,q3,q4,q5,q6,ball_x,ball_y,ball_z"


def export_plot_data(out_dir, success_reports=(), dtw_reports=(),
                     speed_reports=(), sim2sim_reports=(), trajectories=(),
                     traj_label="episode"):
    """Write analysis CSVs; returns the list of written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def emit(name, header, rows):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
        written.append(path)

    if success_reports:
        emit("success.csv", SUCCESS_HEADER,
             [(r.method, str(r.attempts), "%.10g" % r.mean_success,
               "%.10g" % r.success_rate) for r in success_reports])
    if dtw_reports:
        emit("dtw.csv", DTW_HEADER,
             [(r.direction, str(r.episodes), "%.10g" % r.mean_dtw,
               "%.10g" % r.mean_dtw_normalized) for r in dtw_reports])
    if speed_reports:
        emit("speed.csv", SPEED_HEADER,
             [(r.method, r.bucket, str(r.attempts), "%.10g" % r.mean_success,
               "%.10g" % r.success_rate) for r in speed_reports])
    if sim2sim_reports:
        emit("sim2sim.csv", SIM2SIM_HEADER,
             [(r.backend, str(r.attempts), "%.10g" % r.mean_success,
               "%.10g" % r.success_rate) for r in sim2sim_reports])
    for i, traj in enumerate(trajectories):
        rows = []
        for t, q, ball in traj:
            rows.append(("%.10g" % t,) + tuple("%.10g" % v for v in q)
                        + tuple("%.10g" % v for v in ball))
        emit("trajectory_%s_%03d.csv" % (traj_label, i), TRAJ_HEADER, rows)
    return written


def parse_report_csv(path):
    """Rows of a plot CSV as dicts; numeric cells become floats."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for key, cell in zip(header, cells):
            try:
                row[key] = float(cell)
            except ValueError:
                row[key] = cell
        rows.append(row)
    return rows


# ---- demo replay baseline ---------------------------------------------------------

class ClipReplayActor:
    """Open-loop demo playback: tracks the clip's pose sequence and ignores
    the ball entirely. Cycles through the given clips, one per episode."""

    def __init__(self, clips, delta_max):
        if not clips:
            raise ValueError("need at least one clip")
        self.clips = list(clips)
        self.delta_max = delta_max
        self._idx = -1
        self._step = 0

    def begin_episode(self, env):
        self._idx = (self._idx + 1) % len(self.clips)
        self._step = 0

    def __call__(self, obs, env):
        clip = self.clips[self._idx]
        target = clip.poses[min(self._step, len(clip) - 1)]
        self._step += 1
        return np.clip((target - env.arm.q) / self.delta_max, -1.0, 1.0)
