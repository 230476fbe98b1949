import dataclasses

import numpy as np
import pytest

from ppforge.ball import (
    EVENT_BAT, EVENT_BOUNCE_OPP, EVENT_BOUNCE_OWN,
    BackendSpec, BallState, SpawnSpec, WorldParams, is_out_of_play,
    resolve_bat_contact, spawn_ball, step_ball,
)

DT = 1.0 / 120.0


def world(**kw):
    return dataclasses.replace(WorldParams(), **kw)


def spec_a():
    return BackendSpec.for_backend("A")


def spec_b():
    return BackendSpec.for_backend("B")


# ---- flight ------------------------------------------------------------------

@pytest.mark.parametrize("spec", [spec_a(), spec_b()], ids=["A", "B"])
def test_free_fall_matches_closed_form(spec):
    w = world()
    st = BallState(position=np.array([0.0, 0.5, 3.0]),
                   velocity=np.zeros(3))
    t = 0.0
    for _ in range(40):
        st = step_ball(st, w, spec, DT)
        t += DT
        assert st.velocity[2] == pytest.approx(-w.gravity * t, abs=1e-9)
        assert st.position[2] == pytest.approx(3.0 - 0.5 * w.gravity * t * t,
                                               abs=1e-9)


def test_restitution_point_nine_reflects_exactly():
    # zero gravity isolates the impact map from the post-impact flight
    w = world(gravity=0.0)
    st = BallState(position=np.array([0.0, -0.5, w.contact_z + 1e-4]),
                   velocity=np.array([0.0, 0.0, -3.0]))
    st = step_ball(st, w, spec_a(), DT)
    assert st.bounce_count_own == 1
    assert st.last_event == EVENT_BOUNCE_OWN
    assert st.velocity[2] == 0.9 * 3.0


def test_restitution_with_gravity_analytic():
    w = world()
    g = w.gravity
    z0 = w.contact_z + 0.01
    st = BallState(position=np.array([0.0, -0.5, z0]),
                   velocity=np.array([0.0, 0.0, -3.0]))
    stepped = step_ball(st, w, spec_a(), DT)
    # impact time from the drop quadratic, then gravity over the remainder
    v_impact = np.sqrt(9.0 + 2.0 * g * (z0 - w.contact_z))
    tau = (v_impact - 3.0) / g
    expected = 0.9 * v_impact - g * (DT - tau)
    assert stepped.velocity[2] == pytest.approx(expected, abs=1e-9)


def test_elastic_bounce_preserves_speed():
    w = world(table_restitution=1.0, table_friction=0.0)
    z0 = w.contact_z + 0.001
    st = BallState(position=np.array([0.2, -0.4, z0]),
                   velocity=np.array([0.5, 1.0, -2.5]))
    pre = np.linalg.norm(st.velocity)
    stepped = step_ball(st, w, spec_a(), DT)
    assert stepped.bounce_count_own == 1
    # compare at the launch height on the way back up: the vertical speed
    # there follows from energy conservation along the exact parabola
    vz_sq = stepped.velocity[2] ** 2 - 2.0 * w.gravity * (z0 - stepped.position[2])
    post = np.linalg.norm([stepped.velocity[0], stepped.velocity[1],
                           np.sqrt(vz_sq)])
    assert post == pytest.approx(pre, abs=1e-9)


def test_degenerate_dt_rejected():
    st = BallState(position=np.array([0.0, 0.5, 2.0]), velocity=np.zeros(3))
    with pytest.raises(ValueError):
        step_ball(st, world(), spec_a(), 0.0)
    with pytest.raises(ValueError):
        step_ball(st, world(), spec_a(), -DT)


def test_apex_heights_strictly_decrease():
    w = world()
    rng = np.random.default_rng(3)
    for _ in range(200):
        st = BallState(
            position=np.array([rng.uniform(-0.5, 0.5),
                               rng.uniform(-1.0, 1.0),
                               rng.uniform(1.2, 2.2)]),
            velocity=np.array([0.0, 0.0, rng.uniform(-2.0, 0.0)]))
        apexes = []
        prev_vz = st.velocity[2]
        prev_z = st.position[2]
        for _ in range(600):
            st = step_ball(st, w, spec_a(), DT)
            if prev_vz > 0.0 >= st.velocity[2]:
                apexes.append(max(prev_z, st.position[2]))
            prev_vz = st.velocity[2]
            prev_z = st.position[2]
            if st.resting or len(apexes) >= 4:
                break
        assert len(apexes) >= 2
        for a, b in zip(apexes, apexes[1:]):
            assert b < a


@pytest.mark.parametrize("y0,counter", [(-0.5, "bounce_count_own"),
                                        (0.5, "bounce_count_opp")],
                         ids=["own", "opp"])
def test_side_bookkeeping_counts_the_right_half(y0, counter):
    w = world()
    st = BallState(position=np.array([0.1, y0, 1.3]), velocity=np.zeros(3))
    other = ("bounce_count_opp" if counter == "bounce_count_own"
             else "bounce_count_own")
    prev = (0, 0)
    for _ in range(600):
        st = step_ball(st, w, spec_a(), DT)
        now = (st.bounce_count_own, st.bounce_count_opp)
        assert (now[0] - prev[0]) + (now[1] - prev[1]) in (0, 1)
        prev = now
        if st.resting:
            break
    assert getattr(st, counter) >= 2
    assert getattr(st, other) == 0
    assert st.last_event in (EVENT_BOUNCE_OWN, EVENT_BOUNCE_OPP)


@pytest.mark.parametrize("spec", [spec_a(), spec_b()], ids=["A", "B"])
def test_no_tunneling_through_slab(spec):
    w = world()
    rng = np.random.default_rng(11)
    spawn = SpawnSpec(speed_lo=4.0, speed_hi=8.0)
    for _ in range(300):
        st = spawn_ball(rng, spawn, w)
        for _ in range(360):
            st = step_ball(st, w, spec, DT)
            inside = (abs(st.position[0]) < w.x_half
                      and abs(st.position[1]) < w.y_half)
            if inside:
                assert st.position[2] > w.table_height - 0.05
            if st.resting or is_out_of_play(st, w):
                break


def test_backend_divergence_bounded():
    # same spawn, no bat: the backends share the exact ballistic flight, so
    # any gap comes from the contact models and must stay modest
    w = world()
    rng = np.random.default_rng(5)
    spawn = SpawnSpec(speed_lo=4.0, speed_hi=4.8)
    for _ in range(20):
        st0 = spawn_ball(rng, spawn, w)
        finals = []
        for spec in (spec_a(), spec_b()):
            st = st0.clone()
            for _ in range(96):
                st = step_ball(st, w, spec, DT)
            finals.append(st)
        a, b = finals
        assert a.bounce_count_own + a.bounce_count_opp == 1
        assert b.bounce_count_own + b.bounce_count_opp == 1
        assert a.bounce_count_own == b.bounce_count_own
        gap = np.linalg.norm(a.position - b.position)
        assert 1e-3 < gap < 0.5


# ---- bat contact ---------------------------------------------------------------

def test_bat_contact_normal_incidence_elastic_reverses():
    w = world(bat_restitution=1.0, bat_friction=0.0)
    n = np.array([0.0, 1.0, 0.0])
    st = BallState(position=np.array([0.0, -0.9 + w.ball_radius, 1.0]),
                   velocity=np.array([0.0, -2.0, 0.0]))
    out = resolve_bat_contact(st, np.array([0.0, -0.9, 1.0]), n,
                              np.zeros(3), w)
    assert out.has_been_hit
    assert out.last_event == EVENT_BAT
    assert np.allclose(out.velocity, [0.0, 2.0, 0.0], atol=1e-12)


def test_bat_contact_moving_bat_launches_at_w_times_one_plus_e():
    e = 0.7
    w = world(bat_restitution=e, bat_friction=0.0)
    n = np.array([0.0, 1.0, 0.0])
    speed = 1.5
    st = BallState(position=np.array([0.0, -0.9 + w.ball_radius, 1.0]),
                   velocity=np.zeros(3))
    out = resolve_bat_contact(st, np.array([0.0, -0.9, 1.0]), n,
                              np.array([0.0, speed, 0.0]), w)
    assert out.velocity[1] == pytest.approx(speed * (1.0 + e), abs=1e-12)


def test_bat_contact_zero_restitution_matches_bat_normal_velocity():
    w = world(bat_restitution=0.0, bat_friction=0.0)
    n = np.array([0.0, 1.0, 0.0])
    bat_vel = np.array([0.0, 0.8, 0.0])
    st = BallState(position=np.array([0.0, -0.9 + w.ball_radius, 1.0]),
                   velocity=np.array([0.3, -2.0, 0.1]))
    out = resolve_bat_contact(st, np.array([0.0, -0.9, 1.0]), n, bat_vel, w)
    assert out.velocity[1] == pytest.approx(bat_vel[1], abs=1e-12)
    assert out.velocity[0] == pytest.approx(0.3, abs=1e-12)
    assert out.velocity[2] == pytest.approx(0.1, abs=1e-12)


def test_bat_contact_receding_is_noop():
    w = world()
    n = np.array([0.0, 1.0, 0.0])
    st = BallState(position=np.array([0.0, -0.9 + w.ball_radius, 1.0]),
                   velocity=np.array([0.0, 3.0, 0.0]))
    out = resolve_bat_contact(st, np.array([0.0, -0.9, 1.0]), n,
                              np.zeros(3), w)
    assert not out.has_been_hit
    assert np.allclose(out.velocity, st.velocity)


# ---- spawning ----------------------------------------------------------------

def test_degenerate_spawn_is_deterministic():
    w = world()
    spawn = SpawnSpec(x_lo=0.0, x_hi=0.0, y_lo=0.9, y_hi=0.9,
                      z_lo=1.1, z_hi=1.1, speed_lo=4.2, speed_hi=4.2,
                      cone_deg=0.0, target_x_lo=0.1, target_x_hi=0.1,
                      target_y_lo=-0.5, target_y_hi=-0.5)
    a = spawn_ball(np.random.default_rng(1), spawn, w)
    b = spawn_ball(np.random.default_rng(99), spawn, w)
    assert a.position.tobytes() == b.position.tobytes()
    assert a.velocity.tobytes() == b.velocity.tobytes()
    assert np.allclose(a.position, [0.0, 0.9, 1.1], atol=1e-12)
    assert np.linalg.norm(a.velocity) == pytest.approx(4.2, abs=1e-9)
    assert a.velocity[1] < 0.0  # served toward the robot half


def test_spawn_speeds_stay_in_declared_range():
    w = world()
    spawn = SpawnSpec(speed_lo=4.0, speed_hi=4.8)
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        st = spawn_ball(rng, spawn, w)
        s = np.linalg.norm(st.velocity)
        assert 4.0 - 1e-9 <= s <= 4.8 + 1e-9
        assert st.bounce_count_own == 0 and st.bounce_count_opp == 0
        assert not st.has_been_hit


def test_spawn_seed_determinism():
    w = world()
    spawn = SpawnSpec()
    rng1 = np.random.default_rng(42)
    rng2 = np.random.default_rng(42)
    for _ in range(50):
        a = spawn_ball(rng1, spawn, w)
        b = spawn_ball(rng2, spawn, w)
        assert a.position.tobytes() == b.position.tobytes()
        assert a.velocity.tobytes() == b.velocity.tobytes()


def test_empty_speed_range_rejected():
    with pytest.raises(ValueError, match="speed"):
        SpawnSpec(speed_lo=5.0, speed_hi=4.0)
    with pytest.raises(ValueError, match="speed"):
        SpawnSpec(speed_lo=0.0, speed_hi=4.0)
    with pytest.raises(ValueError, match="empty"):
        SpawnSpec(y_lo=1.0, y_hi=0.9)
    with pytest.raises(ValueError, match="cone"):
        SpawnSpec(cone_deg=-1.0)


def test_world_invariants_enforced():
    with pytest.raises(ValueError):
        WorldParams(table_restitution=1.2)
    with pytest.raises(ValueError):
        WorldParams(ball_radius=0.0)
    with pytest.raises(ValueError):
        BackendSpec(substeps=0)
    with pytest.raises(ValueError):
        BackendSpec(integrator="rk9")
    with pytest.raises(ValueError):
        BackendSpec.for_backend("C")
