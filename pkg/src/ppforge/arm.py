"""6R serial arm: kinematics, joint PD stepping, and capsule collision checks.

The kinematic chain is described by a key=value geometry file: per link a
fixed translation offset applied in the parent frame followed by a revolute
joint about a principal axis. Link 7 carries no joint; its offset places the
bat center in the wrist frame and its axis is the bat plane normal.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .configio import ConfigError, read_kv_file

_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}

PACKAGED_ARM = os.path.join(os.path.dirname(__file__), "data", "arm6r.cfg")

TABLE_SLAB_THICKNESS = 0.05


@dataclass(frozen=True)
class TableSlab:
    """Axis-aligned box for arm-vs-table checks: the tabletop volume."""

    x_half: float
    y_half: float
    z_top: float
    thickness: float = TABLE_SLAB_THICKNESS


@dataclass(frozen=True)
class ArmParams:
    offsets: np.ndarray        # 7 x 3, link translation in the parent frame
    axes: np.ndarray           # 7 ints into {x,y,z}; [6] is the bat normal axis
    joint_limits: np.ndarray   # 6 x 2
    vel_limits: np.ndarray     # 6
    default_pose: np.ndarray   # 6
    capsules: np.ndarray       # 6 x 7: ax ay az bx by bz r, in the link frame


@dataclass
class ArmState:
    q: np.ndarray
    qdot: np.ndarray
    qddot: np.ndarray
    bat_pos: np.ndarray
    bat_normal: np.ndarray
    bat_vel: np.ndarray
    saturated: bool = False


def load_arm_params(path=None):
    """Read an arm geometry file; empty/None selects the packaged arm."""
    path = path or PACKAGED_ARM
    raw = {}
    for key, val, line in read_kv_file(path):
        if key in raw:
            raise ConfigError("%s, line %d: duplicate key %r" % (path, line, key))
        raw[key] = (val, line)

    def take(key, kind=float):
        if key not in raw:
            raise ConfigError("%s: missing key %r" % (path, key))
        val, line = raw.pop(key)
        try:
            return kind(val)
        except ValueError:
            raise ConfigError("%s, line %d: bad value for %r" % (path, line, key)) from None

    offsets = np.zeros((7, 3))
    axes = np.zeros(7, dtype=int)
    for i in range(7):
        for j, ax in enumerate("xyz"):
            offsets[i, j] = take("link%d.offset.%s" % (i + 1, ax))
        axis = take("link%d.axis" % (i + 1), str)
        if axis not in _AXIS_INDEX:
            raise ConfigError("%s: link%d.axis must be one of x,y,z" % (path, i + 1))
        axes[i] = _AXIS_INDEX[axis]
    limits = np.zeros((6, 2))
    vel_limits = np.zeros(6)
    default_pose = np.zeros(6)
    capsules = np.zeros((6, 7))
    for i in range(6):
        limits[i, 0] = take("joint%d.limit.min" % (i + 1))
        limits[i, 1] = take("joint%d.limit.max" % (i + 1))
        if not limits[i, 0] < limits[i, 1]:
            raise ConfigError("%s: joint%d limits must satisfy min < max" % (path, i + 1))
        vel_limits[i] = take("joint%d.vel_limit" % (i + 1))
        default_pose[i] = take("default_pose.q%d" % (i + 1))
        for j, field in enumerate(("ax", "ay", "az", "bx", "by", "bz", "r")):
            capsules[i, j] = take("capsule%d.%s" % (i + 1, field))
        if capsules[i, 6] <= 0:
            raise ConfigError("%s: capsule%d radius must be positive" % (path, i + 1))
    if raw:
        stray = sorted(raw)[0]
        raise ConfigError("%s, line %d: unknown key %r" % (path, raw[stray][1], stray))
    return ArmParams(offsets, axes, limits, vel_limits, default_pose, capsules)


def _axis_rotation(axis_idx, angle):
    c = math.cos(angle)
    s = math.sin(angle)
    if axis_idx == 0:
        return np.array(((1.0, 0.0, 0.0), (0.0, c, -s), (0.0, s, c)))
    if axis_idx == 1:
        return np.array(((c, 0.0, s), (0.0, 1.0, 0.0), (-s, 0.0, c)))
    return np.array(((c, -s, 0.0), (s, c, 0.0), (0.0, 0.0, 1.0)))


class ArmModel:
    """Stateless kinematics/dynamics routines bound to one ArmParams."""

    def __init__(self, params: ArmParams):
        self.params = params
        self._fk_key = None
        self._fk_val = None
        self._fk_lin = None
        self._cap_radii = params.capsules[:, 6].copy()
        self._pair_reach = (self._cap_radii[_CAPSULE_PAIRS[0]]
                            + self._cap_radii[_CAPSULE_PAIRS[1]])
        # capsule endpoints in link frames; most are a single axis offset,
        # which turns the frame transform into one scaled rotation column
        self._cap_local = []
        for i in range(6):
            spec = []
            for v in (params.capsules[i, 0:3], params.capsules[i, 3:6]):
                nz = np.nonzero(v)[0]
                if len(nz) == 0:
                    spec.append(None)
                elif len(nz) == 1:
                    spec.append((int(nz[0]), float(v[nz[0]])))
                else:
                    spec.append(v.copy())
            self._cap_local.append(spec)

    # ---- kinematics ----

    def fk(self, q):
        """Forward kinematics.

        Returns (joint_origins 6x3, joint_axes_world 6x3, link_rotations list of 6,
        bat_pos, bat_normal, bat_rotation). The last result is memoized since
        one control substep queries the same pose several times.
        """
        q = np.asarray(q, dtype=float)
        if not np.all(np.isfinite(q)):
            raise ValueError("non-finite joint angles")
        key = q.tobytes()
        if key == self._fk_key:
            return self._fk_val
        p = np.zeros(3)
        R = np.eye(3)
        origins = np.zeros((6, 3))
        axes_w = np.zeros((6, 3))
        rotations = []
        off = self.params.offsets
        ax = self.params.axes
        for i in range(6):
            p = p + R @ off[i]
            axes_w[i] = R[:, ax[i]]
            R = R @ _axis_rotation(ax[i], q[i])
            origins[i] = p
            rotations.append(R)
        bat_pos = p + R @ off[6]
        bat_normal = R[:, ax[6]]
        out = origins, axes_w, rotations, bat_pos, bat_normal.copy(), R
        # linear-velocity basis rows axes_w[i] x (bat_pos - origins[i]),
        # shared by make_state and jacobian
        r = bat_pos - origins
        lin = np.empty((6, 3))
        lin[:, 0] = axes_w[:, 1] * r[:, 2] - axes_w[:, 2] * r[:, 1]
        lin[:, 1] = axes_w[:, 2] * r[:, 0] - axes_w[:, 0] * r[:, 2]
        lin[:, 2] = axes_w[:, 0] * r[:, 1] - axes_w[:, 1] * r[:, 0]
        self._fk_key = key
        self._fk_val = out
        self._fk_lin = lin
        return out

    def bat_pose(self, q):
        _, _, _, bat_pos, bat_normal, R = self.fk(q)
        return bat_pos, bat_normal, R

    def jacobian(self, q):
        """6x6 geometric Jacobian of the bat frame: rows 0..2 linear, 3..5 angular."""
        _, axes_w, _, _, _, _ = self.fk(q)
        J = np.empty((6, 6))
        J[0:3] = self._fk_lin.T
        J[3:6] = axes_w.T
        return J

    def make_state(self, q, qdot=None, qddot=None, saturated=False):
        q = np.asarray(q, dtype=float).copy()
        qdot = np.zeros(6) if qdot is None else np.asarray(qdot, dtype=float).copy()
        qddot = np.zeros(6) if qddot is None else np.asarray(qddot, dtype=float).copy()
        _, _, _, bat_pos, bat_normal, _ = self.fk(q)
        bat_vel = qdot @ self._fk_lin
        return ArmState(q, qdot, qddot, bat_pos, bat_normal, bat_vel, saturated)

    # ---- control ----

    def step_pd(self, state: ArmState, q_target, kp, kd, dt):
        """One PD step on unit joint inertia, semi-implicit Euler.

        Joint limits clamp position with velocity zeroed at the stop; velocity
        limits clamp speed. Any clamp raises the saturation flag.
        """
        if dt <= 0:
            raise ValueError("dt must be positive")
        qddot = kp * (q_target - state.q) - kd * state.qdot
        qdot = state.qdot + qddot * dt
        saturated = False
        vlim = self.params.vel_limits
        over = np.abs(qdot) > vlim
        if over.any():
            qdot = np.clip(qdot, -vlim, vlim)
            saturated = True
        q = state.q + qdot * dt
        lo = self.params.joint_limits[:, 0]
        hi = self.params.joint_limits[:, 1]
        below = q < lo
        above = q > hi
        if below.any() or above.any():
            q = np.clip(q, lo, hi)
            qdot = np.where(below | above, 0.0, qdot)
            saturated = True
        return self.make_state(q, qdot, qddot, saturated)

    # ---- collision geometry ----

    def capsules_world(self, q):
        """World-frame capsule segments (A 6x3, B 6x3, radii 6) for links
        1..6 (no bat)."""
        origins, _, rotations, _, _, _ = self.fk(q)
        A = np.empty((6, 3))
        B = np.empty((6, 3))
        for i in range(6):
            rot = rotations[i]
            out = (A, B)
            for side, spec in enumerate(self._cap_local[i]):
                if spec is None:
                    out[side][i] = origins[i]
                elif type(spec) is tuple:
                    out[side][i] = origins[i] + rot[:, spec[0]] * spec[1]
                else:
                    out[side][i] = origins[i] + rot @ spec
        return A, B, self._cap_radii

    def check_collisions(self, state: ArmState, table: TableSlab, caps=None):
        if caps is None:
            caps = self.capsules_world(state.q)
        A, B, radii = caps
        ab_lo = np.minimum(A, B)
        ab_hi = np.maximum(A, B)
        self_collision = False
        # cheap AABB gaps lower-bound the segment distances; only surviving
        # pairs pay for the exact test
        I, J = _CAPSULE_PAIRS
        gap = np.maximum(ab_lo[J] - ab_hi[I], ab_lo[I] - ab_hi[J])
        reach = self._pair_reach
        near = (np.maximum(gap, 0.0) ** 2).sum(axis=1) < reach * reach
        for k in np.nonzero(near)[0]:
            i = I[k]
            j = J[k]
            d = _segment_segment_distance(A[i], B[i], A[j], B[j])
            if d < reach[k]:
                self_collision = True
                break
        lo = (-table.x_half, -table.y_half, table.z_top - table.thickness)
        hi = (table.x_half, table.y_half, table.z_top)
        box_gap = np.maximum(np.maximum(np.asarray(lo) - ab_hi, ab_lo - np.asarray(hi)), 0.0)
        arm_table = False
        for k in np.nonzero((box_gap ** 2).sum(axis=1) < radii ** 2)[0]:
            if _segment_box_distance(A[k], B[k], lo, hi) < radii[k]:
                arm_table = True
                break
        return self_collision, arm_table

    def ball_contact(self, q, ball_pos, ball_radius, caps=None):
        """True when the ball sphere touches any link capsule (bat excluded)."""
        if caps is None:
            caps = self.capsules_world(q)
        A, B, radii = caps
        reach = radii + ball_radius
        gap = np.maximum(np.minimum(A, B) - ball_pos, ball_pos - np.maximum(A, B))
        near = (np.maximum(gap, 0.0) ** 2).sum(axis=1) < reach * reach
        for k in np.nonzero(near)[0]:
            if _point_segment_distance(ball_pos, A[k], B[k]) < reach[k]:
                return True
        return False


# adjacent links share a joint and always touch; only pairs two or more
# links apart are self-collision candidates
_CAPSULE_PAIRS = (np.array([0, 0, 0, 0, 1, 1, 1, 2, 2, 3]),
                  np.array([2, 3, 4, 5, 3, 4, 5, 4, 5, 5]))


def _point_segment_distance(p, a, b):
    abx = float(b[0] - a[0])
    aby = float(b[1] - a[1])
    abz = float(b[2] - a[2])
    apx = float(p[0] - a[0])
    apy = float(p[1] - a[1])
    apz = float(p[2] - a[2])
    denom = abx * abx + aby * aby + abz * abz
    if denom > 0.0:
        t = (apx * abx + apy * aby + apz * abz) / denom
        t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
        apx -= t * abx
        apy -= t * aby
        apz -= t * abz
    return math.sqrt(apx * apx + apy * apy + apz * apz)


def _segment_segment_distance(p1, q1, p2, q2):
    # Ericson, Real-Time Collision Detection, closest point of two segments.
    d1x = float(q1[0] - p1[0]); d1y = float(q1[1] - p1[1]); d1z = float(q1[2] - p1[2])
    d2x = float(q2[0] - p2[0]); d2y = float(q2[1] - p2[1]); d2z = float(q2[2] - p2[2])
    rx = float(p1[0] - p2[0]); ry = float(p1[1] - p2[1]); rz = float(p1[2] - p2[2])
    a = d1x * d1x + d1y * d1y + d1z * d1z
    e = d2x * d2x + d2y * d2y + d2z * d2z
    f = d2x * rx + d2y * ry + d2z * rz
    if a <= 1e-18 and e <= 1e-18:
        return math.sqrt(rx * rx + ry * ry + rz * rz)
    if a <= 1e-18:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = d1x * rx + d1y * ry + d1z * rz
        if e <= 1e-18:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = d1x * d2x + d1y * d2y + d1z * d2z
            denom = a * e - b * b
            s = min(max((b * f - c * e) / denom, 0.0), 1.0) if denom != 0.0 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    dx = rx + d1x * s - d2x * t
    dy = ry + d1y * s - d2y * t
    dz = rz + d1z * s - d2z * t
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def _point_box_distance(p, lo, hi):
    dx = max(lo[0] - p[0], 0.0, p[0] - hi[0])
    dy = max(lo[1] - p[1], 0.0, p[1] - hi[1])
    dz = max(lo[2] - p[2], 0.0, p[2] - hi[2])
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def _segment_box_distance(a, b, lo, hi):
    """Exact min distance from segment a-b to an axis-aligned box.

    Squared distance along the segment is piecewise quadratic with breaks
    where a coordinate of the moving point crosses a box face; each piece is
    minimized in closed form.
    """
    ax = float(a[0]); ay = float(a[1]); az = float(a[2])
    dx = float(b[0]) - ax; dy = float(b[1]) - ay; dz = float(b[2]) - az
    pt = (ax, ay, az)
    dd = (dx, dy, dz)
    breaks = [0.0, 1.0]
    for k in range(3):
        dk = dd[k]
        if dk != 0.0:
            for face in (float(lo[k]), float(hi[k])):
                t = (face - pt[k]) / dk
                if 0.0 < t < 1.0:
                    breaks.append(t)
    breaks.sort()
    best = None
    for n in range(len(breaks) - 1):
        t0 = breaks[n]
        t1 = breaks[n + 1]
        if t1 <= t0:
            continue
        tm = 0.5 * (t0 + t1)
        # quadratic coefficients of d^2(t) on this piece
        qa = 0.0; qb = 0.0; qc = 0.0
        for k in range(3):
            x = pt[k] + tm * dd[k]
            if x < float(lo[k]):
                c0 = float(lo[k]) - pt[k]
                qa += dd[k] * dd[k]; qb += -2.0 * dd[k] * c0; qc += c0 * c0
            elif x > float(hi[k]):
                c0 = pt[k] - float(hi[k])
                qa += dd[k] * dd[k]; qb += 2.0 * dd[k] * c0; qc += c0 * c0
        if qa > 0.0:
            tv = -qb / (2.0 * qa)
            if tv < t0:
                tv = t0
            elif tv > t1:
                tv = t1
        else:
            tv = t0
        for t in (t0, tv, t1):
            val = qa * t * t + qb * t + qc
            if best is None or val < best:
                best = val
    return math.sqrt(best) if best > 0.0 else 0.0
