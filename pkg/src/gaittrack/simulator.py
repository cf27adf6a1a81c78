"""Synthetic walker scenarios with identity-specific gait signatures.

Each subject is a walking torso with a body ellipse and a minimal gait model:
per-point radial velocity is the projection of the torso velocity plus one
limb sinusoid at the subject's stride frequency, weighted toward points near
the ground.  Detected point counts thin out with distance following a
per-subject power law, and an optional blockage model suppresses a subject's
points whenever another body's ellipse cuts the radar line of sight.

This is deliberately not a biomechanical or electromagnetic model; it
produces just enough per-subject structure (speed, stride rate, limb
velocity amplitude, body extent, reflectivity falloff) for the classifier to
have something identity-specific to learn, while exercising the tracker with
realistic sparsity and dropouts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gaittrack.classifier.training import TrainingCorpus
from gaittrack.clustering import Frame

DEFAULT_FPS = 14.92
WALL_MARGIN = 0.45      # m, start steering back this close to a wall
AVOID_RADIUS = 0.85     # m, start steering away from another walker
POSITION_JITTER = 0.02  # m, per-point measurement jitter
VELOCITY_JITTER = 0.05  # m/s
LEG_HEIGHT = 0.9        # m, limb motion fades to zero above this height


@dataclass(frozen=True)
class GaitProfile:
    """Per-subject walking signature and reflectivity."""

    subject_id: int
    torso_speed: float     # preferred walking speed (m/s)
    stride_freq: float     # gait cycle rate (Hz)
    limb_amp: float        # peak limb radial-velocity amplitude (m/s)
    length: float          # body ellipse major axis, shoulder line (m)
    width: float           # body ellipse minor axis (m)
    mean_points: float     # mean detected point count at 1 m
    power_exponent: float  # distance falloff of count and power

    def __post_init__(self):
        if min(self.torso_speed, self.stride_freq, self.limb_amp, self.length,
               self.width, self.mean_points, self.power_exponent) <= 0:
            raise ValueError("profile parameters must be positive")
        if self.length < self.width:
            raise ValueError("body ellipse needs length >= width")


def default_profiles(n: int = 8) -> list[GaitProfile]:
    """A bank of distinguishable walkers.

    Every pair differs strongly on at least three of the signature axes
    (speed, stride rate, limb amplitude, build, reflectivity falloff), so an
    identity classifier has several independent cues per subject.
    """
    # point counts are balanced against the falloff so even the dimmest
    # subject stays above the clustering minimum at the far arena corner
    table = [
        # speed, stride, amp,  length, width, points, exponent
        (0.62, 1.30, 0.45, 0.52, 0.24, 72.0, 0.75),
        (1.40, 2.30, 1.15, 0.41, 0.16, 110.0, 1.15),
        (0.95, 1.95, 0.65, 0.50, 0.23, 85.0, 0.95),
        (1.25, 1.45, 1.05, 0.43, 0.18, 60.0, 0.70),
        (0.75, 2.10, 0.90, 0.46, 0.21, 95.0, 1.05),
        (1.10, 1.70, 0.50, 0.52, 0.20, 78.0, 0.85),
        (0.85, 1.55, 1.20, 0.44, 0.22, 65.0, 0.78),
        (1.30, 2.00, 0.75, 0.48, 0.17, 100.0, 1.00),
    ]
    if not 1 <= n <= len(table):
        raise ValueError(f"between 1 and {len(table)} default profiles exist")
    return [GaitProfile(i, *row) for i, row in enumerate(table[:n])]


@dataclass
class Scenario:
    """A walking scenario: who walks where, for how long."""

    profiles: list[GaitProfile]
    duration: int                      # frames
    arena: tuple[float, float, float, float] = (-2.4, 2.4, 1.2, 5.5)
    radar_pos: tuple[float, float] = (0.0, 0.0)
    blockage: bool = True
    seed: int = 0
    fps: float = DEFAULT_FPS
    # optional fixed paths: subject id -> (n_waypoints, 2) array; subjects
    # without waypoints walk freely with smooth random headings
    waypoints: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError("duration must be >= 1 frame")
        x_lo, x_hi, y_lo, y_hi = self.arena
        if x_lo >= x_hi or y_lo >= y_hi:
            raise ValueError("arena bounds are inverted")
        for sid, path in self.waypoints.items():
            path = np.atleast_2d(np.asarray(path, dtype=float))
            self.waypoints[sid] = path
            if (path[:, 0].min() < x_lo or path[:, 0].max() > x_hi
                    or path[:, 1].min() < y_lo or path[:, 1].max() > y_hi):
                raise ValueError(f"waypoints for subject {sid} leave the arena")


class _Walker:
    """Kinematic state of one simulated subject."""

    def __init__(self, profile: GaitProfile, pos: np.ndarray, heading: float,
                 phase: float, waypoints: np.ndarray | None):
        self.profile = profile
        self.pos = pos
        self.heading = heading
        self.turn_rate = 0.0
        self.phase = phase
        self.waypoints = waypoints
        self.wp_index = 0

    def step(self, dt: float, arena, others: list[np.ndarray],
             rng: np.random.Generator) -> None:
        p = self.profile
        if self.waypoints is not None:
            self._step_waypoints(dt)
        else:
            self._step_free(dt, arena, others, rng)
        self.phase += 2.0 * math.pi * p.stride_freq * dt

    def _step_waypoints(self, dt: float) -> None:
        target = self.waypoints[self.wp_index]
        delta = target - self.pos
        dist = np.hypot(*delta)
        if dist < 1e-9:
            if self.wp_index < len(self.waypoints) - 1:
                self.wp_index += 1
            return
        self.heading = math.atan2(delta[1], delta[0])
        step = min(self.profile.torso_speed * dt, dist)
        self.pos = self.pos + step * delta / dist
        if dist <= step and self.wp_index < len(self.waypoints) - 1:
            self.wp_index += 1

    def _step_free(self, dt: float, arena, others, rng) -> None:
        x_lo, x_hi, y_lo, y_hi = arena
        self.turn_rate = 0.88 * self.turn_rate + 1.6 * rng.standard_normal() * dt
        self.turn_rate = float(np.clip(self.turn_rate, -1.2, 1.2))
        self.heading += self.turn_rate

        # steer away from close walkers, then back inside near walls
        for other in others:
            delta = self.pos - other
            dist = np.hypot(*delta)
            if 1e-9 < dist < AVOID_RADIUS:
                away = math.atan2(delta[1], delta[0])
                self.heading += 0.45 * _angle_to(self.heading, away)
        cx, cy = 0.5 * (x_lo + x_hi), 0.5 * (y_lo + y_hi)
        near_wall = (self.pos[0] < x_lo + WALL_MARGIN
                     or self.pos[0] > x_hi - WALL_MARGIN
                     or self.pos[1] < y_lo + WALL_MARGIN
                     or self.pos[1] > y_hi - WALL_MARGIN)
        if near_wall:
            inward = math.atan2(cy - self.pos[1], cx - self.pos[0])
            self.heading += 0.35 * _angle_to(self.heading, inward)

        speed = self.profile.torso_speed * (1.0 + 0.05 * math.sin(0.4 * self.phase))
        self.pos = self.pos + speed * dt * np.array(
            [math.cos(self.heading), math.sin(self.heading)])
        self.pos[0] = float(np.clip(self.pos[0], x_lo, x_hi))
        self.pos[1] = float(np.clip(self.pos[1], y_lo, y_hi))

    @property
    def velocity(self) -> np.ndarray:
        return self.profile.torso_speed * np.array(
            [math.cos(self.heading), math.sin(self.heading)])


def _angle_to(current: float, target: float) -> float:
    """Signed smallest rotation from current to target heading."""
    return (target - current + math.pi) % (2.0 * math.pi) - math.pi


def _ellipse_blocks_segment(center: np.ndarray, semi_major: float,
                            semi_minor: float, angle: float,
                            seg_a: np.ndarray, seg_b: np.ndarray) -> bool:
    """True when the segment a-b crosses the ellipse."""
    c, s = math.cos(-angle), math.sin(-angle)
    rot = np.array([[c, -s], [s, c]])
    a = rot @ (seg_a - center) / (semi_major, semi_minor)
    b = rot @ (seg_b - center) / (semi_major, semi_minor)
    # closest approach of the unit circle to segment a-b
    d = b - a
    dd = float(d @ d)
    t = 0.0 if dd < 1e-12 else float(np.clip(-(a @ d) / dd, 0.0, 1.0))
    closest = a + t * d
    return float(closest @ closest) <= 1.0


def _point_rng(seed: int, subject_id: int, k: int) -> np.random.Generator:
    # per (subject, frame) stream: blockage decisions for one subject can
    # never displace another subject's points
    return np.random.default_rng((seed, 104729, subject_id, k))


def _sample_subject_points(walker: _Walker, radar: np.ndarray,
                           rng: np.random.Generator) -> np.ndarray:
    """One frame of detected points for one subject; (n, 5) array."""
    p = walker.profile
    dist = max(float(np.hypot(*(walker.pos - radar))), 0.3)
    lam = p.mean_points * (1.0 / dist) ** p.power_exponent
    count = rng.poisson(lam)
    if count == 0:
        return np.empty((0, 5))

    shoulder = walker.heading + math.pi / 2.0
    c, s = math.cos(shoulder), math.sin(shoulder)
    body = rng.standard_normal((count, 2)) * (p.length / 4.0, p.width / 4.0)
    xy = walker.pos + body @ np.array([[c, s], [-s, c]])
    xy += POSITION_JITTER * rng.standard_normal((count, 2))

    # bimodal height: leg returns low, torso returns around chest height;
    # only points below LEG_HEIGHT swing with the stride
    is_leg = rng.random(count) < 0.35
    z = np.where(is_leg,
                 rng.uniform(0.1, 0.65, size=count),
                 rng.normal(1.05, 0.22, size=count))
    z = np.clip(z, 0.05, 1.9)
    leg_factor = np.maximum(0.0, 1.0 - z / LEG_HEIGHT)

    radial = xy - radar
    radial /= np.maximum(np.linalg.norm(radial, axis=1, keepdims=True), 1e-9)
    v = radial @ walker.velocity
    v += p.limb_amp * math.sin(walker.phase) * leg_factor
    v += VELOCITY_JITTER * rng.standard_normal(count)

    point_dist = np.maximum(np.hypot(xy[:, 0] - radar[0], xy[:, 1] - radar[1]),
                            0.3)
    power = (1.0 / point_dist) ** p.power_exponent \
        * np.exp(0.3 * rng.standard_normal(count))
    return np.column_stack([xy[:, 0], xy[:, 1], z, v, power])


def _initial_positions(n: int, arena, rng: np.random.Generator,
                       min_sep: float = 1.2) -> list[np.ndarray]:
    x_lo, x_hi, y_lo, y_hi = arena
    out: list[np.ndarray] = []
    for _ in range(n):
        for _attempt in range(200):
            pos = np.array([rng.uniform(x_lo + 0.3, x_hi - 0.3),
                            rng.uniform(y_lo + 0.3, y_hi - 0.3)])
            if all(np.hypot(*(pos - q)) >= min_sep for q in out):
                break
        out.append(pos)
    return out


def generate(scenario: Scenario) -> tuple[list[Frame], list[list[tuple[int, float, float]]]]:
    """Simulate a scenario; returns frames and per-frame ground truth.

    Ground truth lists every subject every frame as (subject id, x, y), even
    while blocked.  Blockage only removes points, never displaces them, and
    the whole generation is deterministic under the scenario seed.
    """
    rng = np.random.default_rng(scenario.seed)
    radar = np.asarray(scenario.radar_pos, dtype=float)
    dt = 1.0 / scenario.fps
    positions = _initial_positions(len(scenario.profiles), scenario.arena, rng)
    walkers = []
    for profile, pos in zip(scenario.profiles, positions):
        wp = scenario.waypoints.get(profile.subject_id)
        if wp is not None:
            pos = wp[0].astype(float).copy()
        walkers.append(_Walker(profile, pos,
                               heading=rng.uniform(-math.pi, math.pi),
                               phase=rng.uniform(0, 2 * math.pi),
                               waypoints=wp))

    frames: list[Frame] = []
    truth: list[list[tuple[int, float, float]]] = []
    for k in range(scenario.duration):
        for i, w in enumerate(walkers):
            others = [v.pos for j, v in enumerate(walkers) if j != i]
            w.step(dt, scenario.arena, others, rng)

        blocked = [False] * len(walkers)
        if scenario.blockage:
            for j, target in enumerate(walkers):
                for i, blocker in enumerate(walkers):
                    if i == j:
                        continue
                    prof = blocker.profile
                    if _ellipse_blocks_segment(
                            blocker.pos, prof.length / 2.0, prof.width / 2.0,
                            blocker.heading + math.pi / 2.0, radar, target.pos):
                        blocked[j] = True
                        break

        clouds = []
        for j, w in enumerate(walkers):
            if blocked[j]:
                continue
            pts = _sample_subject_points(
                w, radar, _point_rng(scenario.seed, w.profile.subject_id, k))
            if len(pts):
                clouds.append(pts)
        points = np.concatenate(clouds, axis=0) if clouds else np.empty((0, 5))
        frames.append(Frame(k=k, points=points))
        truth.append([(w.profile.subject_id, float(w.pos[0]), float(w.pos[1]))
                      for w in walkers])
    return frames, truth


TRAIN_ROOMS = [
    (-1.4, 1.4, 1.0, 4.6),
    (-2.4, 2.4, 1.2, 5.5),
    (-1.9, 1.9, 1.0, 4.0),
]


def segment_windows(clouds: list[np.ndarray], window: int = 30,
                    stride: int = 10) -> list[list[np.ndarray]]:
    """Cut a walk into overlapping windows, skipping any with an empty step."""
    out = []
    for start in range(0, len(clouds) - window + 1, stride):
        chunk = clouds[start:start + window]
        if all(len(c) > 0 for c in chunk):
            out.append(chunk)
    return out


def training_walks(profiles: list[GaitProfile], minutes_per_subject: float,
                   rooms: int = 3, seed: int = 0, fps: float = DEFAULT_FPS
                   ) -> list[tuple[int, list[Frame]]]:
    """Single-subject free walks, one per (subject, room)."""
    if rooms < 1:
        raise ValueError("rooms must be >= 1")
    frames_per_room = int(round(minutes_per_subject * 60.0 * fps / rooms))
    walks = []
    for profile in profiles:
        for room in range(rooms):
            scenario = Scenario(
                profiles=[profile],
                duration=frames_per_room,
                arena=TRAIN_ROOMS[room % len(TRAIN_ROOMS)],
                blockage=False,
                seed=seed + 1013 * profile.subject_id + 7 * room,
                fps=fps)
            frames, _ = generate(scenario)
            walks.append((profile.subject_id, frames))
    return walks


def corpus_from_walks(walks: list[tuple[int, list[Frame]]],
                      n_subjects: int, window: int = 30,
                      stride: int = 10) -> TrainingCorpus:
    """Cut labeled walks into overlapping windows."""
    windows: list[list[np.ndarray]] = []
    labels: list[int] = []
    for subject, frames in walks:
        clouds = [f.points for f in frames]
        for win in segment_windows(clouds, window, stride):
            windows.append(win)
            labels.append(subject)
    return TrainingCorpus(windows=windows, labels=np.array(labels),
                          n_subjects=n_subjects)


def generate_training_corpus(profiles: list[GaitProfile],
                             minutes_per_subject: float,
                             rooms: int = 3, seed: int = 0,
                             fps: float = DEFAULT_FPS,
                             window: int = 30,
                             stride: int = 10) -> TrainingCorpus:
    """Single-subject free walks cut into overlapping labeled windows.

    Each subject walks alone for ``minutes_per_subject`` minutes split across
    ``rooms`` different arena layouts; every window carries exactly one
    subject label.
    """
    if len(profiles) < 2:
        raise ValueError("a corpus needs at least two subjects")
    walks = training_walks(profiles, minutes_per_subject, rooms, seed, fps)
    n_subjects = max(p.subject_id for p in profiles) + 1
    return corpus_from_walks(walks, n_subjects, window, stride)
