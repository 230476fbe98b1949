import numpy as np
import pytest

from ppforge.motion import (
    FRAME_DIM, DemoDataset, MotionClip, augment_clip, build_dataset,
    load_clip, load_clips, save_clip, save_clips,
)


def mk_clip(n, direction="forward", dt=1.0 / 60.0, seed=0, k=1):
    rng = np.random.default_rng(seed)
    return MotionClip(dt=dt, frames=rng.normal(size=(n, FRAME_DIM)),
                      direction=direction, speed_factor=k)


# ---- clip container -------------------------------------------------------------

def test_clip_validation():
    frames = np.zeros((4, FRAME_DIM))
    with pytest.raises(ValueError, match="dt"):
        MotionClip(dt=0.0, frames=frames, direction="forward")
    with pytest.raises(ValueError, match="n x 12"):
        MotionClip(dt=0.01, frames=np.zeros((4, 7)), direction="forward")
    with pytest.raises(ValueError, match="2 frames"):
        MotionClip(dt=0.01, frames=frames[:1], direction="forward")
    with pytest.raises(ValueError, match="non-finite"):
        MotionClip(dt=0.01, frames=np.full((4, FRAME_DIM), np.inf),
                   direction="forward")
    with pytest.raises(ValueError, match="direction"):
        MotionClip(dt=0.01, frames=frames, direction="upward")


def test_clip_views_and_equality():
    c = mk_clip(5)
    assert c.poses.shape == (5, 6)
    assert c.velocities.shape == (5, 6)
    assert np.array_equal(np.hstack([c.poses, c.velocities]), c.frames)
    assert len(c) == 5
    assert c == mk_clip(5)
    assert c != mk_clip(5, seed=1)
    assert c != mk_clip(5, k=2)
    assert c != mk_clip(5, direction="leftward")


# ---- speed augmentation ----------------------------------------------------------

def test_augment_identity_factor_copies():
    c = mk_clip(6)
    out = augment_clip(c, 1)
    assert out == c
    out.frames[0, 0] = 99.0
    assert c.frames[0, 0] != 99.0


def test_augment_stride_and_velocity_scaling():
    c = mk_clip(10)
    out = augment_clip(c, 3)
    idx = np.array([0, 3, 6, 9])
    assert len(out) == 4
    assert out.dt == c.dt
    assert out.speed_factor == 3
    assert out.poses.tobytes() == c.poses[idx].tobytes()
    assert np.array_equal(out.velocities, c.velocities[idx] * 3)


def test_augment_rejects_bad_factors():
    c = mk_clip(8)
    for k in (0, -1, 2.5):
        with pytest.raises(ValueError, match="positive integer"):
            augment_clip(c, k)
    with pytest.raises(ValueError, match="fewer than 2"):
        augment_clip(c, 8)


def test_augment_composes():
    c = mk_clip(13)
    ab = augment_clip(augment_clip(c, 2), 3)
    direct = augment_clip(c, 6)
    assert ab == direct


def test_augment_law_randomized():
    rng = np.random.default_rng(4)
    for _ in range(200):
        n = int(rng.integers(2, 61))
        k = int(rng.integers(1, min(8, n - 1) + 1))
        c = mk_clip(n, seed=int(rng.integers(0, 1000)))
        out = augment_clip(c, k)
        idx = np.arange((n - 1) // k + 1) * k
        assert out.poses.tobytes() == c.poses[idx].tobytes()
        assert np.array_equal(out.velocities, c.velocities[idx] * k)
        assert out.dt == c.dt


# ---- dataset ---------------------------------------------------------------------

def test_dataset_validation():
    with pytest.raises(ValueError, match="window"):
        DemoDataset([mk_clip(5)], window_length=1)
    with pytest.raises(ValueError, match="no clips"):
        DemoDataset([], window_length=4)
    with pytest.raises(ValueError, match="shorter"):
        DemoDataset([mk_clip(3)], window_length=4)


def test_dataset_window_count():
    ds = DemoDataset([mk_clip(5), mk_clip(7, seed=1)], window_length=4)
    assert ds.total_windows == 2 + 4


def test_dataset_window_contents_exhaustive():
    clips = [mk_clip(5), mk_clip(7, seed=1)]
    ds = DemoDataset(clips, window_length=4)

    class FixedDraws:
        def __init__(self, vals):
            self.vals = np.asarray(vals)

        def integers(self, lo, hi, size):
            assert (lo, hi, size) == (0, ds.total_windows, len(self.vals))
            return self.vals

    wins = ds.sample_windows(FixedDraws(range(6)), 6)
    expected = [clips[0].frames[0:4], clips[0].frames[1:5],
                clips[1].frames[0:4], clips[1].frames[1:5],
                clips[1].frames[2:6], clips[1].frames[3:7]]
    for got, want in zip(wins, expected):
        assert np.array_equal(got, want.reshape(-1))


def test_dataset_sampling_hits_every_window():
    ds = DemoDataset([mk_clip(5), mk_clip(7, seed=1)], window_length=4)
    rng = np.random.default_rng(0)
    seen = set()
    wins = ds.sample_windows(rng, 400)
    for w in wins:
        seen.add(w.tobytes())
    assert len(seen) == ds.total_windows


def test_dataset_channel_stats_floored():
    frames = np.zeros((6, FRAME_DIM))
    frames[:, 0] = [1, 2, 3, 4, 5, 6]          # varying channel
    c = MotionClip(dt=0.02, frames=frames, direction="forward")
    mean, std = DemoDataset([c], window_length=4).channel_stats()
    assert mean[0] == pytest.approx(3.5)
    assert std[0] == pytest.approx(np.std([1, 2, 3, 4, 5, 6]))
    assert mean[1] == 0.0
    assert std[1] == 0.01  # constant channel hits the floor


def test_dataset_direction_filter():
    clips = [mk_clip(6, "forward"), mk_clip(6, "leftward", seed=1),
             augment_clip(mk_clip(9, "forward", seed=2), 2)]
    ds = DemoDataset(clips, window_length=4)
    assert len(ds.clips_for("forward")) == 2
    assert len(ds.clips_for("forward", speed_factor=2)) == 1
    assert len(ds.clips_for("rightward")) == 0


def test_build_dataset_drops_too_short_candidates():
    clips = [mk_clip(12), mk_clip(4, seed=1)]
    with pytest.warns(UserWarning, match="dropping"):
        ds = build_dataset(clips, factors=(1, 2, 3, 5), window_length=4)
    # 12-frame clip survives k in {1, 2, 3}; 4-frame clip only k=1
    assert len(ds.clips) == 4
    assert sorted(c.speed_factor for c in ds.clips) == [1, 1, 2, 3]


def test_build_dataset_full_grid():
    clips = [mk_clip(60, d, seed=i) for i, d in enumerate(
        ["forward"] * 3 + ["leftward"] * 2 + ["rightward"] * 2)]
    ds = build_dataset(clips, factors=(1, 2, 3, 5), window_length=4)
    assert len(ds.clips) == 28


# ---- clip files ------------------------------------------------------------------

def test_save_load_round_trip_is_exact(tmp_path):
    c = mk_clip(9, "rightward", dt=1.0 / 60.0, seed=5, k=3)
    p = tmp_path / "c.txt"
    save_clip(c, str(p))
    assert load_clip(str(p)) == c


def test_load_clip_errors(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("not a clip\n")
    with pytest.raises(ValueError, match="header"):
        load_clip(str(p))
    p.write_text("# motionclip v1 dt=0.02 joints=5 direction=forward k=1\n")
    with pytest.raises(ValueError, match="joints=6"):
        load_clip(str(p))
    p.write_text("# motionclip v1 dt=0.02 joints=6 direction=forward k=1\n"
                 "0 0 0\n")
    with pytest.raises(ValueError, match="expected 12 values, line 2"):
        load_clip(str(p))
    row = " ".join(["0"] * 12)
    p.write_text("# motionclip v1 dt=0.02 joints=6 direction=forward k=1\n"
                 f"{row}\n")
    with pytest.raises(ValueError, match="2 frames"):
        load_clip(str(p))
    p.write_text("# motionclip v1 dt=-1 joints=6 direction=forward k=1\n"
                 f"{row}\n{row}\n")
    with pytest.raises(ValueError, match="dt"):
        load_clip(str(p))


def test_save_clips_manifest_round_trip(tmp_path):
    clips = [mk_clip(6, "forward"), mk_clip(8, "leftward", seed=1),
             mk_clip(7, "rightward", seed=2, k=2)]
    names = save_clips(clips, str(tmp_path))
    assert len(names) == 3
    assert all((tmp_path / n).exists() for n in names)
    assert (tmp_path / "manifest.txt").exists()
    back = load_clips(str(tmp_path))
    assert back == clips
    # without a manifest the directory listing still loads every clip
    (tmp_path / "manifest.txt").unlink()
    assert sorted(len(c) for c in load_clips(str(tmp_path))) == [6, 7, 8]


def test_load_clips_empty_dir_raises(tmp_path):
    with pytest.raises(ValueError, match="no clip files"):
        load_clips(str(tmp_path))
