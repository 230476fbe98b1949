"""Force-driven Cartesian compliance control and ball-free teaching.

The bat is dragged by an external wrench while a Cartesian spring-damper
tracks a desired pose. With zero stiffness the arm yields to the applied
force against pure damping, which is the drag-and-teach mode: an operator
wrench script moves the bat through a stroke and the joint trajectory is
recorded as a motion clip.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .arm import ArmModel, ArmState
from .motion import DIRECTIONS, MotionClip

PACKAGED_SCRIPTS = os.path.join(os.path.dirname(__file__), "data", "scripts")


class ClipRejected(ValueError):
    """Raised when a taught trajectory saturates limits too often."""


@dataclass(frozen=True)
class FdccGains:
    """Cartesian stiffness/damping, [linear xyz | angular xyz]."""

    kp: np.ndarray
    kd: np.ndarray

    @staticmethod
    def from_config(cfg) -> "FdccGains":
        kp = np.array([cfg["teach.kp_lin"]] * 3 + [cfg["teach.kp_ang"]] * 3)
        kd = np.array([cfg["teach.kd_lin"]] * 3 + [cfg["teach.kd_ang"]] * 3)
        return FdccGains(kp=kp, kd=kd)


def rotation_error(r_des: np.ndarray, r_cur: np.ndarray) -> np.ndarray:
    """Axis-angle vector of r_des relative to r_cur."""
    r = r_des @ r_cur.T
    cos_a = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_a)
    if angle < 1e-9:
        return np.zeros(3)
    axis = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        # angle near pi: axis from the diagonal of (r + I) / 2
        diag = np.clip((np.diag(r) + 1.0) / 2.0, 0.0, None)
        axis = np.sqrt(diag)
        axis[np.argmax(np.abs(axis))] *= np.sign(
            axis[np.argmax(np.abs(axis))]) or 1.0
        return angle * axis / max(np.linalg.norm(axis), 1e-12)
    return angle * axis / norm


def fdcc_step(model: ArmModel, state: ArmState, f_ext: np.ndarray,
              gains: FdccGains, inertia: np.ndarray, dt: float,
              x_des=None, r_des=None, torque_cap: float = 0.0) -> ArmState:
    """One compliance step under an external wrench.

    The tracking wrench kp*(pose error) - kd*(bat twist) is added to f_ext,
    mapped to joint torques through the transposed Jacobian, and integrated
    semi-implicitly against a diagonal joint-space inertia. torque_cap <= 0
    disables torque saturation.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    f_ext = np.asarray(f_ext, dtype=float)
    if f_ext.shape != (6,) or not np.all(np.isfinite(f_ext)):
        raise ValueError("external wrench must be 6 finite values")
    p = model.params
    jac = model.jacobian(state.q)
    xdot = jac @ state.qdot

    err = np.zeros(6)
    if x_des is not None:
        err[:3] = np.asarray(x_des, dtype=float) - state.bat_pos
    if r_des is not None:
        _, _, _, _, _, r_cur = model.fk(state.q)
        err[3:] = rotation_error(np.asarray(r_des, dtype=float), r_cur)

    wrench = f_ext + gains.kp * err - gains.kd * xdot
    tau = jac.T @ wrench
    saturated = False
    if torque_cap > 0:
        norm = np.linalg.norm(tau)
        if norm > torque_cap:
            tau = tau * (torque_cap / norm)
            saturated = True

    qddot = tau / inertia
    qdot = state.qdot + qddot * dt
    over = np.abs(qdot) > p.vel_limits
    if np.any(over):
        qdot = np.clip(qdot, -p.vel_limits, p.vel_limits)
        saturated = True
    q = state.q + qdot * dt
    lo, hi = p.joint_limits[:, 0], p.joint_limits[:, 1]
    clamped = (q < lo) | (q > hi)
    if np.any(clamped):
        q = np.clip(q, lo, hi)
        qdot = np.where(clamped, 0.0, qdot)
        saturated = True
    return model.make_state(q, qdot, qddot, saturated=saturated)


# ---- operator wrench scripts ------------------------------------------------


@dataclass
class ForceScript:
    """Piecewise-linear 6-wrench over time with a direction label."""

    times: np.ndarray
    wrenches: np.ndarray          # m x 6
    direction: str
    name: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.wrenches = np.asarray(self.wrenches, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2:
            raise ValueError("script needs at least 2 knots")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("script times must be strictly increasing")
        if self.wrenches.shape != (len(self.times), 6):
            raise ValueError("script wrenches must be m x 6")
        if self.direction not in DIRECTIONS:
            raise ValueError("unknown direction label %r" % self.direction)

    @property
    def duration(self):
        return float(self.times[-1])

    def wrench_at(self, t: float) -> np.ndarray:
        """Linear interpolation; clamps to the first/last knot outside."""
        out = np.empty(6)
        for j in range(6):
            out[j] = np.interp(t, self.times, self.wrenches[:, j])
        return out


def load_script(path, wrench_cap: float = 0.0) -> ForceScript:
    """Parse a wrench script: '# direction <label>' then 't fx fy fz tx ty tz' rows."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    direction = None
    times, rows = [], []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if body.startswith("direction"):
                parts = body.split()
                if len(parts) != 2:
                    raise ValueError("%s: malformed direction header, line %d"
                                     % (path, lineno))
                direction = parts[1]
            continue
        parts = stripped.split()
        if len(parts) != 7:
            raise ValueError("%s: expected 7 values, line %d" % (path, lineno))
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ValueError("%s: bad float, line %d" % (path, lineno)) from None
        times.append(vals[0])
        rows.append(vals[1:])
    if direction is None:
        raise ValueError("%s: missing '# direction <label>' header" % path)
    script = ForceScript(times=np.array(times), wrenches=np.array(rows),
                         direction=direction,
                         name=os.path.splitext(os.path.basename(path))[0])
    if wrench_cap > 0 and np.max(np.abs(script.wrenches)) > wrench_cap:
        raise ValueError("%s: wrench exceeds cap %g" % (path, wrench_cap))
    return script


def list_scripts(script_dir=None):
    d = script_dir or PACKAGED_SCRIPTS
    names = sorted(n for n in os.listdir(d) if n.endswith(".txt"))
    if not names:
        raise ValueError("no wrench scripts found in %s" % d)
    return [os.path.join(d, n) for n in names]


def drag_teach(model: ArmModel, script: ForceScript, gains: FdccGains,
               inertia: np.ndarray, record_hz: int = 60, sim_hz: int = 120,
               torque_cap: float = 120.0, tail: float = 0.5,
               amp_scale: float = 1.0, start_q=None) -> MotionClip:
    """Run a wrench script from rest and record the joint trajectory.

    Records (q, qdot) at record_hz. A clip with more than 10% of frames
    flagged saturated is rejected rather than kept as a distorted demo.
    """
    if sim_hz % record_hz != 0:
        raise ValueError("sim rate must be a multiple of the record rate")
    stride = sim_hz // record_hz
    duration = script.duration + tail
    steps = int(round(duration * sim_hz))
    q0 = model.params.default_pose if start_q is None else np.asarray(start_q, dtype=float)
    state = model.make_state(q0)
    dt = 1.0 / sim_hz

    frames = []
    saturated = 0
    for k in range(steps):
        w = script.wrench_at(k * dt) * amp_scale
        state = fdcc_step(model, state, w, gains, inertia, dt,
                          torque_cap=torque_cap)
        if (k + 1) % stride == 0:
            frames.append(np.concatenate([state.q, state.qdot]))
            if state.saturated:
                saturated += 1
    total = len(frames)
    if total < 2:
        raise ClipRejected("script %r too short to record" % script.name)
    if saturated > 0.10 * total:
        raise ClipRejected("script %r saturated %d/%d recorded frames"
                           % (script.name, saturated, total))
    return MotionClip(dt=1.0 / record_hz, frames=np.array(frames),
                      direction=script.direction)


def make_demo_set(rng, model: ArmModel, cfg, script_dir=None):
    """Teach one clip per packaged script with jittered wrench amplitude."""
    gains = FdccGains.from_config(cfg)
    inertia = np.full(6, cfg["teach.inertia"])
    cap = cfg["teach.torque_cap"]
    wrench_cap = cfg["teach.wrench_cap"]
    jitter = cfg["teach.jitter"]
    clips = []
    for path in list_scripts(script_dir):
        script = load_script(path, wrench_cap=wrench_cap)
        amp = 1.0 + jitter * rng.uniform(-1.0, 1.0)
        clip = drag_teach(model, script, gains, inertia,
                          record_hz=cfg["teach.record_hz"],
                          sim_hz=cfg["sim.hz"], torque_cap=cap,
                          amp_scale=amp)
        peak = np.max(np.abs(clip.velocities), axis=0)
        if np.any(peak > 0.25 * model.params.vel_limits):
            raise ClipRejected("script %r drives joints past 25%% of the "
                               "velocity limit" % script.name)
        clips.append(clip)
    return clips
