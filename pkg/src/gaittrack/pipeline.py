"""Per-frame orchestration of the full tracking and identification loop.

Stage order per frame: predict all tracks -> cluster the point-cloud ->
score and assign detections to confirmed tracks (cheap JPDA + optimal
assignment + gate) -> Kalman updates -> second-stage association of leftover
detections to candidate tracks -> m/n lifecycle and proximity pruning ->
point-cloud buffering -> one batched classifier pass over the eligible
tracks -> joint identity assignment -> report -> identity-driven respawns
(taking effect next frame).

Classification never feeds back into the Kalman math; it only affects track
bookkeeping (labels and respawned indices), so disabling the classifier
leaves all kinematic outputs unchanged.

Per-frame classifier cost stays low by caching per-step feature vectors:
each observed cloud runs the point-block once when it enters the buffer, and
a classification pass only re-runs the cheap temporal stack on the cached
features.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from gaittrack.association import (
    cjpda_scores,
    gate_and_associate,
    lifecycle,
    proximity_prune,
)
from gaittrack.classifier.network import TcpcnModel
from gaittrack.classifier.preprocess import FeatureStats, preprocess
from gaittrack.clustering import Frame, dbscan, extension_observation
from gaittrack.identify import IdentityBelief, correct_tracks, joint_identify
from gaittrack.tracking import (
    NoiseConfig,
    Track,
    build_F,
    build_Q,
    make_track,
    measurement_covariance,
    observation_matrix,
    predict,
    update,
)

MIN_TRACK_RANGE = 0.05  # m, clamp for the conversion Jacobian


@dataclass
class PipelineConfig:
    """Every tunable of the chain, with indoor-monitoring defaults."""

    eps: float = 0.4            # DBSCAN radius and proximity-prune distance (m)
    min_pts: int = 10           # DBSCAN minimum cluster size
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    beta: float = 0.01          # association missed-detection bias
    gate: float = 0.05          # minimum association score for a match
    m: int = 10                 # m/n logic: hits required ...
    n: int = 30                 # ... within this many frames
    n_max: int = 100            # points per cloud fed to the classifier
    k_steps: int = 30           # classifier input window length
    rho: float = 0.99           # identity moving-average weight on the past
    gamma: float = 0.999        # identity decay while undetected
    p_conf: float = 0.1         # minimum belief for a non-unknown label
    num_subjects: int = 8       # expected classifier class count
    classify: bool = True
    dt: float = 1.0 / 14.92     # frame period (s)
    seed: int = 0

    def validate(self) -> None:
        if self.eps <= 0 or self.min_pts < 1:
            raise ValueError("need eps > 0 and min_pts >= 1")
        if self.k_steps % 2 != 0:
            raise ValueError("k_steps must be even (the eligibility rule "
                             "uses half the window)")
        if self.m > self.n:
            raise ValueError("m/n logic needs m <= n")
        if self.k_steps // 2 > self.n:
            raise ValueError("hit history (n) must cover half the classifier "
                             "window")
        if not 0.0 < self.rho < 1.0 or not 0.0 < self.gamma < 1.0:
            raise ValueError("rho and gamma must lie in (0, 1)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass
class TrackReport:
    id: int
    identity: int | None
    x: float
    y: float
    vx: float
    vy: float
    length: float
    width: float
    angle: float
    p_diag: list[float]


@dataclass
class FrameReport:
    k: int
    tracks: list[TrackReport]
    t_track_ms: float
    t_infer_ms: float

    def key_fields(self) -> tuple:
        """Everything except the wall-clock latencies, for determinism checks."""
        return (self.k, [(t.id, t.identity, t.x, t.y, t.vx, t.vy, t.length,
                          t.width, t.angle, tuple(t.p_diag))
                         for t in self.tracks])


@dataclass
class RunSummary:
    n_frames: int = 0
    reports: list[FrameReport] = field(default_factory=list)
    respawns: int = 0
    mean_track_ms: float = 0.0
    p95_track_ms: float = 0.0
    mean_infer_ms: float = 0.0
    p95_infer_ms: float = 0.0
    p95_total_ms: float = 0.0


class Pipeline:
    """Stateful frame-by-frame tracker/identifier."""

    def __init__(self, config: PipelineConfig,
                 model: TcpcnModel | None = None):
        config.validate()
        if model is not None and config.classify \
                and model.n_subjects != config.num_subjects:
            raise ValueError(
                f"model was trained for {model.n_subjects} subjects but the "
                f"config expects {config.num_subjects}")
        self.config = config
        self.model = model if config.classify else None
        self.F = build_F(config.dt)
        self.Q = build_Q(config.noise, config.dt)
        self.H = observation_matrix()
        self.tracks: list[Track] = []
        self.candidates: list[Track] = []
        self.next_id = 0
        self.rng = np.random.default_rng(config.seed)
        self.last_k: int | None = None
        self.respawns = 0
        self._features: dict[int, list[np.ndarray]] = {}
        if self.model is not None:
            self._stats = FeatureStats(
                np.asarray(self.model.feature_mean, dtype=np.float64),
                np.asarray(self.model.feature_std, dtype=np.float64))

    # ------------------------------------------------------------------ #

    def _obs_covariance(self, track: Track) -> np.ndarray:
        state = track.state
        if np.hypot(state.x, state.y) < MIN_TRACK_RANGE:
            clamped = type(state)(x=state.x, y=max(state.y, MIN_TRACK_RANGE),
                                  vx=state.vx, vy=state.vy,
                                  length=state.length, width=state.width,
                                  angle=state.angle)
            return measurement_covariance(clamped, self.config.noise)
        return measurement_covariance(state, self.config.noise)

    def _associate(self, tracks: list[Track], observations,
                   obs_cov: dict[int, np.ndarray]):
        """Gated cheap-JPDA assignment for one track pool."""
        if not tracks or not observations:
            return [], list(range(len(observations)))
        pred = np.array([t.state.position for t in tracks])
        innov = np.stack([t.P[:2, :2] + obs_cov[t.id][:2, :2] for t in tracks])
        centroids = np.array([o.centroid for o in observations])
        gamma = cjpda_scores(pred, innov, centroids, self.config.beta)
        assignment = gate_and_associate(gamma, self.config.gate)
        matches = [(n, tracks[t]) for n, t in assignment.matches]
        return matches, assignment.unmatched_detections

    def _extract_features(self, cloud: np.ndarray) -> np.ndarray:
        tensor = preprocess([cloud], self._stats, self.config.n_max,
                            self.rng, self.model.dtype)
        return self.model.pc_features(tensor[0])

    def step(self, frame: Frame) -> FrameReport:
        """Process one frame; frame indices must be strictly increasing."""
        if self.last_k is not None and frame.k <= self.last_k:
            raise ValueError(f"frame index {frame.k} is not increasing")
        self.last_k = frame.k
        cfg = self.config
        t_infer = 0.0
        t0 = time.perf_counter()

        # observation covariances at the current estimates, then predict
        everybody = self.tracks + self.candidates
        obs_cov = {t.id: self._obs_covariance(t) for t in everybody}
        for track in everybody:
            predict(track, self.F, self.Q)

        clusters, _ = dbscan(frame, cfg.eps, cfg.min_pts)
        observations = [extension_observation(frame, c) for c in clusters]
        cluster_points = [frame.points[c.indices] for c in clusters]

        matches, leftover = self._associate(self.tracks, observations, obs_cov)
        matched_ids = set()
        new_clouds: list[tuple[Track, int]] = []
        for n, track in matches:
            update(track, observations[n], self.H, obs_cov[track.id])
            matched_ids.add(track.id)
            new_clouds.append((track, n))

        leftover_obs = [observations[n] for n in leftover]
        cand_matches, unclaimed = self._associate(
            self.candidates, leftover_obs, obs_cov)
        for n_local, cand in cand_matches:
            n = leftover[n_local]
            update(cand, observations[n], self.H, obs_cov[cand.id])
            matched_ids.add(cand.id)
            new_clouds.append((cand, n))
        for n_local in unclaimed:
            n = leftover[n_local]
            cand = make_track(self.next_id, observations[n], cfg.noise,
                              buffer_size=cfg.k_steps)
            self.next_id += 1
            matched_ids.add(cand.id)
            self.candidates.append(cand)
            new_clouds.append((cand, n))

        for track in self.tracks + self.candidates:
            track.record_hit(track.id in matched_ids, cfg.n)
        for track, n in new_clouds:
            track.append_cloud(cluster_points[n])

        self.tracks, self.candidates, promoted = lifecycle(
            self.tracks, self.candidates, cfg.m, cfg.n)
        kept = proximity_prune(self.tracks + self.candidates, cfg.eps)
        kept_ids = {t.id for t in kept}
        self.tracks = [t for t in self.tracks if t.id in kept_ids]
        self.candidates = [t for t in self.candidates if t.id in kept_ids]
        for track in promoted:
            if track.belief is None:
                track.belief = IdentityBelief.uniform(cfg.num_subjects)
        alive = {t.id for t in self.tracks + self.candidates}
        self._features = {tid: f for tid, f in self._features.items()
                          if tid in alive}

        # feature cache upkeep (classifier inference cost)
        if self.model is not None:
            t1 = time.perf_counter()
            live = {t.id for t in self.tracks}
            promoted_ids = {t.id for t in promoted}
            for track, _n in new_clouds:
                if track.id not in live or track.id in promoted_ids:
                    continue
                feats = self._features.setdefault(track.id, [])
                n_buf = len(track.buffer)
                if len(feats) == n_buf - 1:
                    feats.append(self._extract_features(track.buffer[-1]))
                elif len(feats) == n_buf and n_buf > 0:
                    feats.pop(0)
                    feats.append(self._extract_features(track.buffer[-1]))
                else:
                    self._features[track.id] = [
                        self._extract_features(c) for c in track.buffer]
            for track in promoted:
                self._features[track.id] = [
                    self._extract_features(c) for c in track.buffer]
            t_infer += time.perf_counter() - t1

        # classify eligible tracks in one batch
        outputs: dict[int, np.ndarray] = {}
        if self.model is not None:
            eligible = [t for t in self.tracks
                        if len(t.buffer) == cfg.k_steps
                        and t.detected_in_all(cfg.k_steps // 2)
                        and len(self._features.get(t.id, ())) == cfg.k_steps]
            if eligible:
                t1 = time.perf_counter()
                stack = np.stack([np.stack(self._features[t.id])
                                  for t in eligible])
                probs = self.model.classify_features(stack)
                outputs = {t.id: probs[i] for i, t in enumerate(eligible)}
                t_infer += time.perf_counter() - t1

        labels = joint_identify(self.tracks, outputs, cfg.rho, cfg.gamma,
                                cfg.p_conf, k=frame.k)

        report = FrameReport(
            k=frame.k,
            tracks=[TrackReport(
                id=t.id, identity=labels.get(t.id, t.identity),
                x=t.state.x, y=t.state.y, vx=t.state.vx, vy=t.state.vy,
                length=t.state.length, width=t.state.width,
                angle=t.state.angle,
                p_diag=[float(v) for v in np.diag(t.P)])
                for t in sorted(self.tracks, key=lambda t: t.id)],
            t_track_ms=0.0, t_infer_ms=t_infer * 1e3)

        # identity-driven corrections take effect from the next frame
        self.tracks, self.next_id, n_respawn = correct_tracks(
            self.tracks, labels, self.next_id)
        self.respawns += n_respawn

        total = time.perf_counter() - t0
        report.t_track_ms = max(total - t_infer, 0.0) * 1e3
        return report


def run(frames, config: PipelineConfig, model: TcpcnModel | None = None,
        sink=None) -> RunSummary:
    """Stream frames through a fresh pipeline.

    ``sink`` may be a callable taking each FrameReport.  Returns aggregate
    latency statistics and the collected reports.
    """
    pipe = Pipeline(config, model)
    summary = RunSummary()
    for frame in frames:
        report = pipe.step(frame)
        summary.reports.append(report)
        summary.n_frames += 1
        if sink is not None:
            sink(report)
    summary.respawns = pipe.respawns
    if summary.reports:
        track_ms = np.array([r.t_track_ms for r in summary.reports])
        infer_ms = np.array([r.t_infer_ms for r in summary.reports])
        summary.mean_track_ms = float(track_ms.mean())
        summary.p95_track_ms = float(np.percentile(track_ms, 95))
        summary.mean_infer_ms = float(infer_ms.mean())
        summary.p95_infer_ms = float(np.percentile(infer_ms, 95))
        summary.p95_total_ms = float(np.percentile(track_ms + infer_ms, 95))
    return summary
