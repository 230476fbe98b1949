"""Scripted interception baseline built on ballistic prediction.

Predicts where the serve crosses a strike plane in front of the robot,
derives the bat orientation and normal speed that reflect the ball onto the
goal spot, and tracks the plan with damped-least-squares inverse kinematics
through the same delta-action interface the learned policy uses. It reads
the true simulator state, so it serves as a task oracle for calibrating
environments, not as a fair baseline.
"""

from __future__ import annotations

import math

import numpy as np

from .arm import ArmModel
from .ball import KAPPA, BallState, WorldParams
from .envs import PingPongEnv


def _advance(p, v, g, t):
    p2 = p + v * t + np.array((0.0, 0.0, -0.5 * g * t * t))
    v2 = v + np.array((0.0, 0.0, -g * t))
    return p2, v2


def _descend_time(pz, vz, g, plane):
    if pz <= plane + 1e-12 and vz < 0.0:
        return 0.0
    disc = vz * vz - 2.0 * g * (plane - pz)
    if disc < 0.0:
        return None
    t = (vz + math.sqrt(disc)) / g
    return t if t > 1e-12 else None


def predict_plane_crossing(ball: BallState, world: WorldParams, y_plane,
                           t_horizon=2.5):
    """(time, position, velocity) when the ball next crosses y_plane moving
    toward the robot, following parabolas and table bounces; None if it
    never does within the horizon."""
    p = ball.position.copy()
    v = ball.velocity.copy()
    if ball.resting:
        return None
    g = world.gravity
    plane_z = world.contact_z
    t = 0.0
    for _ in range(5):
        tau_y = None
        if v[1] < -1e-9 and p[1] > y_plane:
            tau_y = (y_plane - p[1]) / v[1]
        elif abs(p[1] - y_plane) < 1e-9 and v[1] < 0.0:
            tau_y = 0.0
        tau_b = _descend_time(p[2], v[2], g, plane_z)
        if tau_b is not None:
            bp, _ = _advance(p, v, g, tau_b)
            if abs(bp[0]) > world.x_half or abs(bp[1]) > world.y_half:
                tau_b = None
        if tau_y is not None and (tau_b is None or tau_y <= tau_b):
            if t + tau_y > t_horizon:
                return None
            cp, cv = _advance(p, v, g, tau_y)
            return t + tau_y, cp, cv
        if tau_b is None:
            return None
        p, v = _advance(p, v, g, tau_b)
        t += tau_b
        if t > t_horizon:
            return None
        vt = np.array((v[0], v[1], 0.0))
        ratio = min(world.table_friction * KAPPA, 1.0)
        v = vt * (1.0 - ratio) + np.array((0.0, 0.0, -world.table_restitution * v[2]))
    return None


def aim_return_velocity(strike_pos, goal_xy, world: WorldParams,
                        flight_times=(0.45, 0.55, 0.65, 0.8)):
    """Outgoing ball velocity landing on the goal, first flight time that
    clears the net; falls back to the loftiest option."""
    g = world.gravity
    land_z = world.contact_z
    best = None
    for tf in flight_times:
        vx = (goal_xy[0] - strike_pos[0]) / tf
        vy = (goal_xy[1] - strike_pos[1]) / tf
        vz = (land_z - strike_pos[2] + 0.5 * g * tf * tf) / tf
        v = np.array((vx, vy, vz))
        best = v
        if vy <= 1e-9:
            continue
        t_net = (0.0 - strike_pos[1]) / vy
        z_net = strike_pos[2] + vz * t_net - 0.5 * g * t_net * t_net
        if z_net >= world.table_height + world.net_height + world.ball_radius + 0.03:
            return v
    return best


def _skew(n):
    return np.array(((0.0, -n[2], n[1]),
                     (n[2], 0.0, -n[0]),
                     (-n[1], n[0], 0.0)))


class BallisticInterceptor:
    """Plan-and-track actor: position the bat on the predicted crossing,
    meet the ball with the reflecting normal, then recover."""

    def __init__(self, model: ArmModel, strike_planes=(-0.95, -0.85, -1.05, -1.15),
                 swing_time=0.12, normal_weight=0.35, ik_iters=3,
                 damping=0.05):
        self.model = model
        self.strike_planes = strike_planes
        self.swing_time = swing_time
        self.normal_weight = normal_weight
        self.ik_iters = ik_iters
        self.damping = damping
        self._plan = None
        self._t = 0.0

    def begin_episode(self, env: PingPongEnv):
        self._plan = None
        self._t = 0.0

    # -- planning --

    def _plan_strike(self, env: PingPongEnv):
        world = env.dom.world
        for y_plane in self.strike_planes:
            hit = predict_plane_crossing(env.ball, world, y_plane)
            if hit is None:
                continue
            t_hit, pos, vel = hit
            # z floor keeps the wrist capsules clear of the tabletop slab
            if not (0.88 <= pos[2] <= 1.35 and abs(pos[0]) <= 0.55):
                continue
            v_out = aim_return_velocity(pos, env.goal_xy, world)
            dv = v_out - vel
            dv_norm = float(np.linalg.norm(dv))
            if dv_norm < 1e-6:
                continue
            normal = dv / dv_norm
            e = world.bat_restitution
            w_speed = float(vel @ normal) + dv_norm / (1.0 + e)
            return {"t_hit": self._t + t_hit, "pos": pos, "normal": normal,
                    "w": w_speed}
        return None

    # -- tracking --

    def _ik_command(self, q, target_pos, target_normal):
        qc = q.copy()
        p = self.model.params
        for _ in range(self.ik_iters):
            _, _, _, bat_pos, bat_normal, _ = self.model.fk(qc)
            jac = self.model.jacobian(qc)
            e_pos = target_pos - bat_pos
            e_n = np.cross(bat_normal, target_normal)
            a = np.vstack([jac[:3], -self.normal_weight * (_skew(bat_normal) @ jac[3:])])
            err = np.concatenate([e_pos, self.normal_weight * e_n])
            m = a @ a.T + (self.damping ** 2) * np.eye(6)
            dq = a.T @ np.linalg.solve(m, err)
            qc = np.clip(qc + dq, p.joint_limits[:, 0], p.joint_limits[:, 1])
        return qc

    def __call__(self, obs, env: PingPongEnv):
        dt = env.dt_phys * env.decimation
        q = env.arm.q
        p = env.model.params
        if env.ball.has_been_hit:
            action = (p.default_pose - q) / env.delta_max * 0.25
            self._t += dt
            return np.clip(action, -1.0, 1.0)
        plan = self._plan_strike(env)
        if plan is not None:
            self._plan = plan
        plan = self._plan
        if plan is None:
            self._t += dt
            return np.zeros(6)
        remaining = plan["t_hit"] - self._t
        n = plan["normal"]
        w = max(plan["w"], 0.0)
        ts = self.swing_time
        if remaining > ts:
            x_d = plan["pos"] - n * (w * ts / 2.0)
            v_d = np.zeros(3)
        else:
            tau = max(remaining, 0.0)
            elapsed = ts - tau
            accel = w / ts
            s = -w * ts / 2.0 + 0.5 * accel * elapsed * elapsed
            x_d = plan["pos"] + n * s
            v_d = n * (accel * elapsed)
        # first-order lead cancels the PD tracking lag
        lag = float(np.mean(env.dom.kd / env.dom.kp))
        q_cmd = self._ik_command(q, x_d + v_d * lag, n)
        self._t += dt
        raw = (q_cmd - q) / env.delta_max
        # uniform scaling instead of per-joint clipping keeps the commanded
        # joint-space direction, so the bat tracks a straight approach path
        peak = np.max(np.abs(raw))
        if peak > 1.0:
            raw = raw / peak
        return raw
