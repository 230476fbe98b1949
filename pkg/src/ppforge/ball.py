"""Ball flight and contact resolution with two divergent dynamics backends.

Backend A treats each step as exact ballistic flight and resolves table,
net, and floor events at root-found crossing times, reflecting velocity
instantaneously. Backend B integrates the same interval in fixed substeps
and models table contact as a penalty spring-damper, which yields a
slightly different effective restitution, a finite contact dwell, and
shifted bounce timing. The gap between the two is the sim2sim transfer gap.

Table: centered on the origin, top face at z = table.height, net plane y = 0.
The robot owns the y < 0 half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# tangential impulse ratio applied per contact (single-scalar friction model)
KAPPA = 0.25

# post-bounce vertical speed below which the ball is considered at rest
REST_EPS = 0.05

# out-of-play margins around the table
OUT_XY_MARGIN = 0.6
OUT_BELOW = 0.3
OUT_ABOVE = 3.0

EVENT_NONE = "none"
EVENT_BOUNCE_OWN = "table_bounce_own"
EVENT_BOUNCE_OPP = "table_bounce_opp"
EVENT_BAT = "bat_hit"
EVENT_NET = "net_hit"
EVENT_FLOOR = "floor"
EVENT_ARM = "arm_body_contact"


@dataclass
class WorldParams:
    gravity: float = 9.81
    table_length: float = 2.74
    table_width: float = 1.525
    table_height: float = 0.76
    table_restitution: float = 0.9
    table_friction: float = 0.1
    bat_radius: float = 0.08
    bat_restitution: float = 0.9
    bat_friction: float = 0.1
    ball_radius: float = 0.02
    net_height: float = 0.1525
    backend: str = "A"

    def __post_init__(self):
        if not (0.0 <= self.table_restitution <= 1.0 and 0.0 <= self.bat_restitution <= 1.0):
            raise ValueError("restitutions must lie in [0, 1]")
        if min(self.table_length, self.table_width, self.table_height, self.ball_radius) <= 0:
            raise ValueError("dimensions must be positive")

    @classmethod
    def from_config(cls, cfg):
        return cls(
            gravity=cfg["gravity"],
            table_length=cfg["table.length"],
            table_width=cfg["table.width"],
            table_height=cfg["table.height"],
            table_restitution=cfg["table.restitution"],
            table_friction=cfg["table.friction"],
            bat_radius=cfg["bat.radius"],
            bat_restitution=cfg["bat.restitution"],
            bat_friction=cfg["bat.friction"],
            ball_radius=cfg["ball.radius"],
            net_height=cfg["net.height"],
            backend=cfg["backend"],
        )

    @property
    def x_half(self):
        return self.table_width / 2.0

    @property
    def y_half(self):
        return self.table_length / 2.0

    @property
    def contact_z(self):
        """Height of the ball center when resting on the table."""
        return self.table_height + self.ball_radius


@dataclass
class BackendSpec:
    integrator: str = "semi_implicit_euler"
    contact_model: str = "instantaneous_reflection"
    stiffness: float = 90000.0
    damping: float = 24.0
    substeps: int = 1

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.integrator not in ("semi_implicit_euler", "velocity_verlet"):
            raise ValueError("unknown integrator %r" % self.integrator)
        if self.contact_model not in ("instantaneous_reflection", "penalty_spring"):
            raise ValueError("unknown contact model %r" % self.contact_model)

    @classmethod
    def for_backend(cls, backend, cfg=None):
        if backend == "A":
            return cls()
        if backend == "B":
            if cfg is None:
                return cls(integrator="velocity_verlet", contact_model="penalty_spring",
                           substeps=8)
            return cls(
                integrator=cfg["backend_b.integrator"],
                contact_model=cfg["backend_b.contact"],
                stiffness=cfg["backend_b.stiffness"],
                damping=cfg["backend_b.damping"],
                substeps=cfg["backend_b.substeps"],
            )
        raise ValueError("unknown backend %r" % backend)


@dataclass
class BallState:
    position: np.ndarray
    velocity: np.ndarray
    bounce_count_own: int = 0
    bounce_count_opp: int = 0
    has_been_hit: bool = False
    last_event: str = EVENT_NONE
    resting: bool = False
    in_contact: bool = False  # penalty-contact latch, backend B only

    def clone(self):
        return BallState(self.position.copy(), self.velocity.copy(),
                         self.bounce_count_own, self.bounce_count_opp,
                         self.has_been_hit, self.last_event,
                         self.resting, self.in_contact)


def _inside_table(x, y, world):
    return abs(x) <= world.x_half and abs(y) <= world.y_half


def _register_bounce(ball, y):
    if y < 0.0:
        ball.bounce_count_own += 1
        ball.last_event = EVENT_BOUNCE_OWN
    else:
        ball.bounce_count_opp += 1
        ball.last_event = EVENT_BOUNCE_OPP


def _descending_crossing(pz, vz, g, plane):
    """Time of the downward crossing of z(t) = pz + vz t - g t^2 / 2 = plane."""
    disc = vz * vz - 2.0 * g * (plane - pz)
    if disc < 0.0:
        return None
    if g <= 0.0:
        if vz >= 0.0 or pz < plane:
            return None
        return (pz - plane) / -vz
    return (vz + math.sqrt(disc)) / g


def _advance_parabola(p, v, g, t):
    p2 = p + v * t
    p2[2] -= 0.5 * g * t * t
    v2 = v.copy()
    v2[2] -= g * t
    return p2, v2


def _step_events_a(ball, world, dt):
    """Event-driven ballistic step: exact flight, root-found contacts."""
    g = world.gravity
    p = ball.position
    v = ball.velocity
    contact_plane = world.contact_z
    remaining = dt
    for _ in range(8):
        if remaining <= 0.0:
            break
        candidates = []
        # table top
        if p[2] <= contact_plane + 1e-12 and v[2] < 0.0 and _inside_table(p[0], p[1], world):
            candidates.append((0.0, "table"))
        else:
            tau = _descending_crossing(p[2], v[2], g, contact_plane)
            if tau is not None and 0.0 < tau <= remaining:
                hit_x = p[0] + v[0] * tau
                hit_y = p[1] + v[1] * tau
                if _inside_table(hit_x, hit_y, world):
                    candidates.append((tau, "table"))
        # net plane
        if v[1] != 0.0:
            tau = -p[1] / v[1]
            if 0.0 < tau <= remaining:
                z = p[2] + v[2] * tau - 0.5 * g * tau * tau
                x = p[0] + v[0] * tau
                top = world.table_height + world.net_height
                if (abs(x) <= world.x_half + world.ball_radius
                        and world.table_height - world.ball_radius <= z <= top + world.ball_radius):
                    candidates.append((tau, "net"))
        # floor
        tau = _descending_crossing(p[2], v[2], g, world.ball_radius)
        if tau is not None and 0.0 < tau <= remaining:
            candidates.append((tau, "floor"))

        if not candidates:
            p, v = _advance_parabola(p, v, g, remaining)
            remaining = 0.0
            break
        tau, kind = min(candidates, key=lambda c: c[0])
        p, v = _advance_parabola(p, v, g, tau)
        remaining -= tau
        if kind == "table":
            vz_in = v[2]
            v[2] = -world.table_restitution * vz_in
            scale = 1.0 - world.table_friction * KAPPA
            v[0] *= scale
            v[1] *= scale
            _register_bounce(ball, p[1])
            p[2] = contact_plane
            if v[2] < REST_EPS:
                v[2] = 0.0
                ball.resting = True
                break
        elif kind == "net":
            v[0] = 0.0
            v[1] = 0.0
            ball.last_event = EVENT_NET
        else:  # floor
            p[2] = world.ball_radius
            v[:] = 0.0
            ball.last_event = EVENT_FLOOR
            ball.resting = True
            break
    ball.position = p
    ball.velocity = v
    return ball


def _step_penalty_b(ball, world, spec, dt):
    """Substepped flight with a spring-damper table contact (backend B)."""
    g = world.gravity
    plane = world.contact_z
    dts = dt / spec.substeps
    p = ball.position
    v = ball.velocity
    for _ in range(spec.substeps):
        inside = _inside_table(p[0], p[1], world)
        az = -g
        if ball.in_contact and inside and p[2] < plane:
            az += spec.stiffness * (plane - p[2]) - spec.damping * v[2]
        vx, vy, vz = v[0], v[1], v[2] + az * dts
        nx = p[0] + vx * dts
        ny = p[1] + vy * dts
        nz = p[2] + 0.5 * (v[2] + vz) * dts
        # net crossing, linear within a substep
        if p[1] * ny < 0.0 and vy != 0.0:
            frac = p[1] / (p[1] - ny)
            zc = p[2] + (nz - p[2]) * frac
            xc = p[0] + (nx - p[0]) * frac
            top = world.table_height + world.net_height
            if (abs(xc) <= world.x_half + world.ball_radius
                    and world.table_height - world.ball_radius <= zc <= top + world.ball_radius):
                vx = vy = 0.0
                nx = xc
                ny = 0.0
                ball.last_event = EVENT_NET
        inside_new = _inside_table(nx, ny, world)
        if not ball.in_contact and inside_new and nz < plane and vz < 0.0:
            ball.in_contact = True
            _register_bounce(ball, ny)
        elif ball.in_contact and (nz >= plane or not inside_new):
            ball.in_contact = False
            scale = 1.0 - world.table_friction * KAPPA
            vx *= scale
            vy *= scale
            if nz >= plane and 0.0 <= vz < REST_EPS and inside_new:
                vz = 0.0
                ball.resting = True
        if nz < world.ball_radius and not inside_new:
            nz = world.ball_radius
            vx = vy = vz = 0.0
            ball.last_event = EVENT_FLOOR
            ball.resting = True
        p = np.array((nx, ny, nz))
        v = np.array((vx, vy, vz))
        if ball.resting:
            break
    ball.position = p
    ball.velocity = v
    return ball


def step_ball(state: BallState, world: WorldParams, spec: BackendSpec, dt: float) -> BallState:
    """Advance the ball by dt seconds. Returns a new state."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    ball = state.clone()
    if ball.resting:
        # slide with decaying horizontal speed; resume flight off the table
        ball.velocity[0] *= max(0.0, 1.0 - 2.0 * dt)
        ball.velocity[1] *= max(0.0, 1.0 - 2.0 * dt)
        ball.position = ball.position + ball.velocity * dt
        if not _inside_table(ball.position[0], ball.position[1], world):
            ball.resting = False
        return ball
    if spec.contact_model == "penalty_spring":
        return _step_penalty_b(ball, world, spec, dt)
    return _step_events_a(ball, world, dt)


def resolve_bat_contact(state: BallState, bat_pos, bat_normal, bat_vel, world: WorldParams) -> BallState:
    """Reflect the ball off the bat disc. Receding contact is a no-op."""
    ball = state.clone()
    n = np.asarray(bat_normal, dtype=float)
    u = ball.velocity - bat_vel
    offset = ball.position - bat_pos
    side = 1.0 if float(offset @ n) >= 0.0 else -1.0
    un = float(u @ n)
    if un * side >= 0.0:
        return ball  # receding
    u_n = un * n
    u_t = u - u_n
    u_new = u_t * (1.0 - world.bat_friction * KAPPA) - world.bat_restitution * u_n
    ball.velocity = bat_vel + u_new
    ball.has_been_hit = True
    ball.last_event = EVENT_BAT
    return ball


def sweep_bat_contact(state: BallState, world: WorldParams, bat_pos, bat_normal, bat_vel, dt):
    """Earliest time in (0, dt] when the ball sphere meets the moving bat plane
    within the bat disc, assuming ballistic ball flight and linear bat motion.
    Returns None when no contact happens in the window."""
    n = bat_normal
    p_rel = state.position - bat_pos
    v_rel = state.velocity - bat_vel
    s0 = float(p_rel @ n)
    sdot0 = float(v_rel @ n)
    g_n = world.gravity * n[2]
    r = world.ball_radius
    side = 1.0 if s0 >= 0.0 else -1.0
    if abs(s0) <= r:
        tau = 0.0
        if sdot0 * side >= 0.0:
            return None
    else:
        # s(t) = s0 + sdot0 t - g_n t^2 / 2 ; solve s = side * r
        a = -0.5 * g_n
        b = sdot0
        c = s0 - side * r
        tau = None
        if abs(a) < 1e-12:
            if b != 0.0:
                t = -c / b
                if 0.0 < t <= dt:
                    tau = t
        else:
            disc = b * b - 4.0 * a * c
            if disc >= 0.0:
                sq = math.sqrt(disc)
                for t in sorted(((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a))):
                    if 0.0 < t <= dt:
                        sdot_t = sdot0 - g_n * t
                        if sdot_t * side < 0.0:
                            tau = t
                            break
        if tau is None:
            return None
    ball_at, _ = _advance_parabola(state.position, state.velocity, world.gravity, tau)
    d = ball_at - (bat_pos + bat_vel * tau)
    tangential = d - (d @ n) * n
    if float(tangential @ tangential) > world.bat_radius ** 2:
        return None
    return tau


def is_out_of_play(state: BallState, world: WorldParams) -> bool:
    x, y, z = state.position
    return (abs(x) > world.x_half + OUT_XY_MARGIN
            or abs(y) > world.y_half + OUT_XY_MARGIN
            or z < world.table_height - OUT_BELOW
            or z > OUT_ABOVE)


# ---- spawning ---------------------------------------------------------------

@dataclass
class SpawnSpec:
    x_lo: float = -0.15
    x_hi: float = 0.15
    y_lo: float = 0.85
    y_hi: float = 1.0
    z_lo: float = 1.05
    z_hi: float = 1.15
    speed_lo: float = 4.0
    speed_hi: float = 6.6
    cone_deg: float = 3.0
    target_x_lo: float = -0.25
    target_x_hi: float = 0.25
    target_y_lo: float = -0.65
    target_y_hi: float = -0.40

    def __post_init__(self):
        if not (0.0 < self.speed_lo <= self.speed_hi <= 20.0):
            raise ValueError("spawn speed range must satisfy 0 < lo <= hi <= 20")
        for lo, hi in ((self.x_lo, self.x_hi), (self.y_lo, self.y_hi), (self.z_lo, self.z_hi),
                       (self.target_x_lo, self.target_x_hi), (self.target_y_lo, self.target_y_hi)):
            if lo > hi:
                raise ValueError("empty spawn range")
        if self.cone_deg < 0.0:
            raise ValueError("cone angle must be >= 0")

    @classmethod
    def from_config(cls, cfg):
        e = "env.spawn."
        return cls(
            x_lo=cfg[e + "x_lo"], x_hi=cfg[e + "x_hi"],
            y_lo=cfg[e + "y_lo"], y_hi=cfg[e + "y_hi"],
            z_lo=cfg[e + "z_lo"], z_hi=cfg[e + "z_hi"],
            speed_lo=cfg[e + "speed_lo"], speed_hi=cfg[e + "speed_hi"],
            cone_deg=cfg[e + "cone_deg"],
            target_x_lo=cfg[e + "target_x_lo"], target_x_hi=cfg[e + "target_x_hi"],
            target_y_lo=cfg[e + "target_y_lo"], target_y_hi=cfg[e + "target_y_hi"],
        )


def _launch_angles(pos, target_xy, speed, world):
    """Tangents of the two launch angles reaching the target point on the
    ball-contact plane, or None when the speed cannot reach it."""
    dx = target_xy[0] - pos[0]
    dy = target_xy[1] - pos[1]
    range_h = math.hypot(dx, dy)
    if range_h < 1e-9:
        return None
    drop = pos[2] - world.contact_z
    a = world.gravity * range_h * range_h / (2.0 * speed * speed)
    disc = range_h * range_h - 4.0 * a * (a - drop)
    if disc < 0.0:
        return None
    sq = math.sqrt(disc)
    return (range_h - sq) / (2.0 * a), (range_h + sq) / (2.0 * a)


def _direction_from_tangent(pos, target_xy, u):
    dx = target_xy[0] - pos[0]
    dy = target_xy[1] - pos[1]
    range_h = math.hypot(dx, dy)
    scale = 1.0 / (range_h * math.sqrt(1.0 + u * u))
    return np.array((dx * scale, dy * scale, u / math.sqrt(1.0 + u * u)))


def _clears_net(pos, vel, world):
    if vel[1] >= 0.0 or pos[1] <= 0.0:
        return True
    tau = -pos[1] / vel[1]
    z = pos[2] + vel[2] * tau - 0.5 * world.gravity * tau * tau
    return z >= world.table_height + world.net_height + world.ball_radius + 0.01


def spawn_ball_detail(rng, spawn: SpawnSpec, world: WorldParams):
    """Sample a spawn; returns (BallState, pre-jitter aim direction)."""
    pos = np.array((rng.uniform(spawn.x_lo, spawn.x_hi),
                    rng.uniform(spawn.y_lo, spawn.y_hi),
                    rng.uniform(spawn.z_lo, spawn.z_hi)))
    speed = rng.uniform(spawn.speed_lo, spawn.speed_hi)
    aim = None
    for _ in range(24):
        target = (rng.uniform(spawn.target_x_lo, spawn.target_x_hi),
                  rng.uniform(spawn.target_y_lo, spawn.target_y_hi))
        angles = _launch_angles(pos, target, speed, world)
        if angles is None:
            continue
        for u in angles:
            cand = _direction_from_tangent(pos, target, u)
            if _clears_net(pos, cand * speed, world):
                aim = cand
                break
        if aim is not None:
            break
    if aim is None:
        # fall back to the max-range angle toward the nominal target center
        target = (0.5 * (spawn.target_x_lo + spawn.target_x_hi),
                  0.5 * (spawn.target_y_lo + spawn.target_y_hi))
        dx = target[0] - pos[0]
        dy = target[1] - pos[1]
        range_h = math.hypot(dx, dy)
        a = world.gravity * range_h * range_h / (2.0 * speed * speed)
        aim = _direction_from_tangent(pos, target, range_h / (2.0 * a))
    # jitter inside the cone; the tilt must not steer a cleared aim into the
    # net, so clearance is re-checked on the jittered ray
    helper = np.array((0.0, 0.0, 1.0)) if abs(aim[2]) < 0.9 else np.array((1.0, 0.0, 0.0))
    e1 = np.cross(aim, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(aim, e1)
    direction = aim
    for _ in range(16):
        phi = math.radians(rng.uniform(0.0, spawn.cone_deg))
        psi = rng.uniform(0.0, 2.0 * math.pi)
        cand = math.cos(phi) * aim + math.sin(phi) * (math.cos(psi) * e1 + math.sin(psi) * e2)
        if _clears_net(pos, cand * speed, world):
            direction = cand
            break
    ball = BallState(position=pos, velocity=speed * direction)
    return ball, aim


def spawn_ball(rng, spawn: SpawnSpec, world: WorldParams) -> BallState:
    ball, _ = spawn_ball_detail(rng, spawn, world)
    return ball
