"""Converted-measurements Kalman filter for extended targets.

Each subject is tracked with a 7D state (x, y, vx, vy, length, width,
orientation): a constant-velocity kinematic block plus a random-walk
extension/orientation block.  The two blocks are fully decoupled: transition,
observation, process-noise and measurement-noise matrices are all block
diagonal, so kinematics and extension never interact through the filter.

Radar measurements are natively polar, so the Cartesian position-observation
covariance is position dependent: a constant polar covariance
diag(sigma_range^2, sigma_azimuth^2) is pushed through the Jacobian of the
polar-to-Cartesian conversion evaluated at the track's estimated position.

Orientation is a circular quantity with period pi; innovations are wrapped to
(-pi/2, pi/2] and the state angle is kept in [0, pi).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from gaittrack.clustering import ExtensionObservation

STATE_DIM = 7
OBS_DIM = 5
MIN_JACOBIAN_RANGE = 0.01  # m, below this the conversion Jacobian blows up
INITIAL_SPEED_STD = 2.0    # m/s, prior velocity uncertainty of a new track


@dataclass(frozen=True)
class NoiseConfig:
    """Process and observation noise standard deviations.

    A zero disables that noise term (useful for deterministic motion in
    tests); negative values are rejected.
    """

    sigma_accel: float = 8.0            # random acceleration (m/s^2)
    sigma_len: float = 0.001            # extension length process std (m)
    sigma_width: float = 0.001          # extension width process std (m)
    sigma_orient: float = math.pi / 24  # orientation process std (rad)
    sigma_range: float = 0.03           # polar range observation std (m)
    sigma_azimuth: float = math.pi / 24  # polar azimuth observation std (rad)
    sigma_obs_len: float = 0.05         # length observation std (m)
    sigma_obs_width: float = 0.05       # width observation std (m)
    sigma_obs_orient: float = math.pi / 6  # orientation observation std (rad)

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must not be negative")


@dataclass
class TrackState:
    """Estimated position, velocity, extension axes and orientation."""

    x: float = 0.0
    y: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    length: float = 0.0
    width: float = 0.0
    angle: float = 0.0

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy,
                         self.length, self.width, self.angle])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "TrackState":
        return cls(*(float(f) for f in v))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass
class Track:
    """One maintained trajectory and its bookkeeping.

    ``buffer`` holds the last ``buffer_size`` observed point-clouds, each an
    (n, 5) array; frames where the track went undetected leave no entry.
    ``hits`` records the match/miss bit per frame over the lifecycle window.
    ``identity`` is the assigned subject label, None while unknown.
    """

    id: int
    state: TrackState
    P: np.ndarray
    buffer: deque = field(default_factory=deque)
    identity: int | None = None
    belief: "IdentityBelief | None" = None
    hits: deque = field(default_factory=deque)
    confirmed: bool = False
    buffer_size: int = 30

    def record_hit(self, hit: bool, window: int) -> None:
        self.hits.append(bool(hit))
        while len(self.hits) > window:
            self.hits.popleft()

    def hit_count(self, last: int | None = None) -> int:
        bits = list(self.hits)
        if last is not None:
            bits = bits[-last:]
        return sum(bits)

    def misses_in(self, last: int) -> int:
        bits = list(self.hits)[-last:]
        return len(bits) - sum(bits)

    def detected_in_all(self, last: int) -> bool:
        bits = list(self.hits)
        return len(bits) >= last and all(bits[-last:])

    def append_cloud(self, points: np.ndarray) -> None:
        self.buffer.append(points)
        while len(self.buffer) > self.buffer_size:
            self.buffer.popleft()


def build_F(dt: float) -> np.ndarray:
    """Constant-velocity transition matrix, identity on the extension block."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    cv = np.kron(np.array([[1.0, dt], [0.0, 1.0]]), np.eye(2))
    F = np.eye(STATE_DIM)
    F[:4, :4] = cv
    return F


def build_Q(cfg: NoiseConfig, dt: float) -> np.ndarray:
    """Process noise: white-acceleration kinematics, random-walk extension."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = np.array([0.5 * dt ** 2, dt])
    kin = cfg.sigma_accel ** 2 * np.kron(np.outer(g, g), np.eye(2))
    Q = np.zeros((STATE_DIM, STATE_DIM))
    Q[:4, :4] = kin
    Q[4:, 4:] = np.diag([cfg.sigma_len ** 2, cfg.sigma_width ** 2,
                         cfg.sigma_orient ** 2])
    return Q


def observation_matrix() -> np.ndarray:
    """Maps state to observation: position plus extension/orientation."""
    H = np.zeros((OBS_DIM, STATE_DIM))
    H[0, 0] = H[1, 1] = 1.0
    H[2, 4] = H[3, 5] = H[4, 6] = 1.0
    return H


def conversion_jacobian(x: float, y: float) -> np.ndarray:
    """Jacobian of (range, azimuth) -> (x, y) at the given position.

    Azimuth is measured from the +y boresight axis, so x = R*sin(az),
    y = R*cos(az).
    """
    rng = math.hypot(x, y)
    if rng < MIN_JACOBIAN_RANGE:
        raise ValueError(
            f"range {rng:.4f} m is too small for a stable conversion Jacobian")
    az = math.atan2(x, y)
    return np.array([[math.sin(az), rng * math.cos(az)],
                     [math.cos(az), -rng * math.sin(az)]])


def measurement_covariance(predicted: TrackState, cfg: NoiseConfig) -> np.ndarray:
    """Position-dependent observation covariance.

    The position block is J * diag(sigma_range^2, sigma_azimuth^2) * J^T with
    J the polar-to-Cartesian Jacobian at the track's estimated position; the
    extension/orientation block is constant.
    """
    J = conversion_jacobian(predicted.x, predicted.y)
    pol = np.diag([cfg.sigma_range ** 2, cfg.sigma_azimuth ** 2])
    R = np.zeros((OBS_DIM, OBS_DIM))
    R[:2, :2] = J @ pol @ J.T
    R[2:, 2:] = np.diag([cfg.sigma_obs_len ** 2, cfg.sigma_obs_width ** 2,
                         cfg.sigma_obs_orient ** 2])
    return R


def wrap_orientation(angle: float) -> float:
    """Wrap an orientation to [0, pi)."""
    return angle % math.pi


def wrap_orientation_residual(delta: float) -> float:
    """Wrap an orientation difference to (-pi/2, pi/2]."""
    return math.pi / 2 - ((math.pi / 2 - delta) % math.pi)


def predict(track: Track, F: np.ndarray, Q: np.ndarray) -> Track:
    """Kalman time update; mutates and returns the track."""
    x = F @ track.state.as_vector()
    P = F @ track.P @ F.T + Q
    track.state = TrackState.from_vector(x)
    track.state.angle = wrap_orientation(track.state.angle)
    track.P = 0.5 * (P + P.T)
    return track


def _enforce_axis_order(track: Track) -> None:
    # keep length >= width >= 0; a swap rotates the orientation by pi/2
    st = track.state
    st.length = max(st.length, 0.0)
    st.width = max(st.width, 0.0)
    if st.width > st.length:
        st.length, st.width = st.width, st.length
        st.angle = wrap_orientation(st.angle + math.pi / 2)
        swap = np.arange(STATE_DIM)
        swap[4], swap[5] = 5, 4
        track.P = track.P[np.ix_(swap, swap)]


def update(track: Track, z: ExtensionObservation, H: np.ndarray,
           R: np.ndarray) -> Track:
    """Kalman measurement update with Joseph-form covariance.

    The orientation component of the innovation is wrapped to
    (-pi/2, pi/2] before use; after the update the axis order
    length >= width is re-enforced and the orientation re-wrapped.
    Raises np.linalg.LinAlgError when the innovation covariance is singular.
    """
    x = track.state.as_vector()
    nu = z.as_vector() - H @ x
    nu[4] = wrap_orientation_residual(nu[4])
    S = H @ track.P @ H.T + R
    K = track.P @ H.T @ np.linalg.inv(S)
    x_new = x + K @ nu
    ImKH = np.eye(STATE_DIM) - K @ H
    P_new = ImKH @ track.P @ ImKH.T + K @ R @ K.T
    track.state = TrackState.from_vector(x_new)
    track.state.angle = wrap_orientation(track.state.angle)
    track.P = 0.5 * (P_new + P_new.T)
    _enforce_axis_order(track)
    return track


def make_track(track_id: int, obs: ExtensionObservation, cfg: NoiseConfig,
               buffer_size: int = 30) -> Track:
    """Initialize a track from its first observation.

    Position, extension and orientation come from the observation; velocity
    starts at zero with a broad prior.
    """
    state = TrackState(x=obs.mu_x, y=obs.mu_y, vx=0.0, vy=0.0,
                       length=obs.length, width=obs.width,
                       angle=wrap_orientation(obs.angle))
    P0 = np.diag([cfg.sigma_range ** 2, cfg.sigma_range ** 2,
                  INITIAL_SPEED_STD ** 2, INITIAL_SPEED_STD ** 2,
                  cfg.sigma_obs_len ** 2, cfg.sigma_obs_width ** 2,
                  cfg.sigma_obs_orient ** 2])
    return Track(id=track_id, state=state, P=P0, buffer_size=buffer_size)
