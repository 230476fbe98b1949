"""Motion clips, speed augmentation, windowed sampling, and clip files.

A clip is a fixed-rate sequence of (joint pose, joint velocity) frames with a
direction label. Speed augmentation subsamples poses at integer stride k
(indices 0, k, 2k, ...) and multiplies the kept velocities by k, keeping dt;
the clip then plays k times faster in wall-clock terms.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

DIRECTIONS = ("forward", "leftward", "rightward")

# discriminator state per frame: 6 joint positions followed by 6 velocities
FRAME_DIM = 12


@dataclass
class MotionClip:
    dt: float
    frames: np.ndarray            # n x 12, [q | qdot] per row
    direction: str
    speed_factor: int = 1

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.dt <= 0:
            raise ValueError("clip dt must be positive")
        if self.frames.ndim != 2 or self.frames.shape[1] != FRAME_DIM:
            raise ValueError("clip frames must be n x %d" % FRAME_DIM)
        if len(self.frames) < 2:
            raise ValueError("clip must have at least 2 frames")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("clip contains non-finite values")
        if self.direction not in DIRECTIONS:
            raise ValueError("unknown direction label %r" % self.direction)

    @property
    def poses(self):
        return self.frames[:, :6]

    @property
    def velocities(self):
        return self.frames[:, 6:]

    def __len__(self):
        return len(self.frames)

    def __eq__(self, other):
        if not isinstance(other, MotionClip):
            return NotImplemented
        return (self.dt == other.dt and self.direction == other.direction
                and self.speed_factor == other.speed_factor
                and self.frames.shape == other.frames.shape
                and bool(np.all(self.frames == other.frames)))


def augment_clip(clip: MotionClip, k: int) -> MotionClip:
    """Subsample poses at stride k and scale velocities by k."""
    if k < 1 or int(k) != k:
        raise ValueError("augmentation factor must be a positive integer")
    k = int(k)
    if k == 1:
        return replace(clip, frames=clip.frames.copy())
    n = len(clip.frames)
    count = (n - 1) // k + 1
    if count < 2:
        raise ValueError("factor %d leaves fewer than 2 frames (clip has %d)" % (k, n))
    idx = np.arange(count) * k
    frames = clip.frames[idx].copy()
    frames[:, 6:] *= k
    return MotionClip(dt=clip.dt, frames=frames, direction=clip.direction,
                      speed_factor=clip.speed_factor * k)


@dataclass
class DemoDataset:
    """Pool of original and augmented clips with window-uniform sampling."""

    clips: list
    window_length: int

    def __post_init__(self):
        if self.window_length < 2:
            raise ValueError("window length must be >= 2")
        if not self.clips:
            raise ValueError("dataset has no clips")
        for c in self.clips:
            if len(c) < self.window_length:
                raise ValueError("dataset clip shorter than the window length")
        self._counts = np.array([len(c) - self.window_length + 1 for c in self.clips])
        self._cum = np.cumsum(self._counts)
        self.total_windows = int(self._cum[-1])

    def sample_window(self, rng):
        """One window, uniform over all windows of all clips."""
        return self.sample_windows(rng, 1)[0]

    def sample_windows(self, rng, batch):
        draws = rng.integers(0, self.total_windows, size=batch)
        out = np.empty((batch, self.window_length * FRAME_DIM))
        for i, d in enumerate(draws):
            ci = int(np.searchsorted(self._cum, d, side="right"))
            start = int(d - (self._cum[ci - 1] if ci else 0))
            win = self.clips[ci].frames[start:start + self.window_length]
            out[i] = win.reshape(-1)
        return out

    def channel_stats(self):
        """Per-channel mean/std over every frame of every clip (std floored)."""
        stacked = np.concatenate([c.frames for c in self.clips], axis=0)
        mean = stacked.mean(axis=0)
        std = np.maximum(stacked.std(axis=0), 1e-2)
        return mean, std

    def clips_for(self, direction, speed_factor=None):
        return [c for c in self.clips
                if c.direction == direction
                and (speed_factor is None or c.speed_factor == speed_factor)]


def build_dataset(clips, factors=(1, 2, 3, 5), window_length=4) -> DemoDataset:
    """Union of clips x factors; candidates shorter than the window are dropped."""
    out = []
    for clip in clips:
        for k in sorted(set(int(f) for f in factors)):
            try:
                cand = augment_clip(clip, k)
            except ValueError:
                warnings.warn("dropping %s clip at factor %d: too few frames"
                              % (clip.direction, k))
                continue
            if len(cand) < window_length:
                warnings.warn("dropping %s clip at factor %d: %d frames < window %d"
                              % (clip.direction, k, len(cand), window_length))
                continue
            out.append(cand)
    return DemoDataset(out, window_length)


# ---- clip files -------------------------------------------------------------

_HEADER_PREFIX = "# motionclip v1 "


def save_clip(clip: MotionClip, path):
    lines = ["%sdt=%.17g joints=6 direction=%s k=%d"
             % (_HEADER_PREFIX, clip.dt, clip.direction, clip.speed_factor)]
    for row in clip.frames:
        lines.append(" ".join("%.17g" % v for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_clip(path) -> MotionClip:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(_HEADER_PREFIX):
        raise ValueError("%s: missing motionclip header, line 1" % path)
    fields = {}
    for token in lines[0][len(_HEADER_PREFIX):].split():
        if "=" not in token:
            raise ValueError("%s: malformed header token %r, line 1" % (path, token))
        key, _, val = token.partition("=")
        fields[key] = val
    try:
        dt = float(fields["dt"])
        joints = int(fields["joints"])
        direction = fields["direction"]
        k = int(fields["k"])
    except (KeyError, ValueError):
        raise ValueError("%s: malformed motionclip header, line 1" % path) from None
    if joints != 6:
        raise ValueError("%s: expected joints=6, line 1" % path)
    if dt <= 0:
        raise ValueError("%s: header dt must be positive, line 1" % path)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != FRAME_DIM:
            raise ValueError("%s: expected %d values, line %d" % (path, FRAME_DIM, lineno))
        try:
            row = [float(p) for p in parts]
        except ValueError:
            raise ValueError("%s: bad float, line %d" % (path, lineno)) from None
        if not all(np.isfinite(row)):
            raise ValueError("%s: non-finite value, line %d" % (path, lineno))
        rows.append(row)
    if len(rows) < 2:
        raise ValueError("%s: clip needs at least 2 frames" % path)
    return MotionClip(dt=dt, frames=np.array(rows), direction=direction, speed_factor=k)


def save_clips(clips, out_dir, manifest_name="manifest.txt"):
    """Write one file per clip plus a manifest; returns the file names."""
    os.makedirs(out_dir, exist_ok=True)
    names = []
    manifest = []
    for i, clip in enumerate(clips):
        name = "clip_%03d_%s_k%d.txt" % (i, clip.direction, clip.speed_factor)
        save_clip(clip, os.path.join(out_dir, name))
        names.append(name)
        manifest.append("%s %s %d %d" % (name, clip.direction, clip.speed_factor, len(clip)))
    with open(os.path.join(out_dir, manifest_name), "w", encoding="utf-8") as fh:
        fh.write("# file direction k frames\n")
        fh.write("\n".join(manifest) + "\n")
    return names


def load_clips(in_dir):
    """Read every clip file in a directory (manifest order when present)."""
    manifest = os.path.join(in_dir, "manifest.txt")
    if os.path.exists(manifest):
        names = []
        with open(manifest, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("#"):
                    names.append(line.split()[0])
    else:
        names = sorted(n for n in os.listdir(in_dir)
                       if n.endswith(".txt") and n != "manifest.txt")
    if not names:
        raise ValueError("no clip files found in %s" % in_dir)
    return [load_clip(os.path.join(in_dir, n)) for n in names]
