"""Point-cloud clustering and per-cluster extension observations.

Frames of detected radar points are grouped into per-subject clusters with
DBSCAN, run on the horizontal (x, y) coordinates only; velocity, height and
power are deliberately excluded because different body parts of one subject
spread widely in those dimensions.  Each cluster is then summarized as a
power-weighted centroid plus a fitted ellipse (axis lengths and orientation)
derived from the weighted sample covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

AXIS_FLOOR = 0.05  # m, reported ellipse axes never fall below this


@dataclass(frozen=True)
class RadarPoint:
    """One detected reflector: position, radial velocity, received power."""

    x: float
    y: float
    z: float
    v: float
    power: float

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.v, self.power)
        if not all(math.isfinite(f) for f in vals):
            raise ValueError("radar point fields must be finite")
        if self.power < 0:
            raise ValueError("received power must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.v, self.power])


@dataclass
class Frame:
    """All points detected at one time step.

    ``points`` is an ``(N, 5)`` float array with columns (x, y, z, v, power);
    an empty frame (total blockage) is legal.
    """

    k: int
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 5)))

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("frame index must be >= 0")
        self.points = np.asarray(self.points, dtype=float)
        if self.points.size == 0:
            self.points = self.points.reshape(0, 5)
        if self.points.ndim != 2 or self.points.shape[1] != 5:
            raise ValueError("points must be an (N, 5) array")

    @property
    def n_points(self) -> int:
        return len(self.points)


@dataclass
class Cluster:
    """Member indices into the owning frame's point list."""

    indices: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=int)

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class ExtensionObservation:
    """Centroid plus fitted ellipse of one cluster.

    ``length >= width`` always; ``angle`` is the major-axis orientation in
    [0, pi) measured from the +x axis.
    """

    mu_x: float
    mu_y: float
    length: float
    width: float
    angle: float

    @property
    def centroid(self) -> np.ndarray:
        return np.array([self.mu_x, self.mu_y])

    def as_vector(self) -> np.ndarray:
        """Observation vector (mu_x, mu_y, length, width, angle)."""
        return np.array([self.mu_x, self.mu_y, self.length, self.width,
                         self.angle])


def dbscan(frame: Frame, eps: float, min_pts: int) -> tuple[list[Cluster], np.ndarray]:
    """Density-based clustering of a frame on its (x, y) coordinates.

    A point is a core point when at least ``min_pts`` points (itself
    included) lie within distance ``eps`` (boundary inclusive).  Clusters are
    the connected components of core points under the eps-neighborhood
    relation; every non-core point within ``eps`` of a core point joins the
    cluster of its nearest core point, which makes the resulting partition
    independent of input ordering.  Remaining points are noise.

    Returns ``(clusters, noise_indices)``; clusters are ordered by their
    smallest member index and each has at least ``min_pts`` members.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    n = frame.n_points
    if n == 0:
        return [], np.empty(0, dtype=int)

    xy = frame.points[:, :2]
    tree = cKDTree(xy)
    neighborhoods = tree.query_ball_point(xy, r=eps)
    core = np.array([len(nb) >= min_pts for nb in neighborhoods])

    labels = np.full(n, -1, dtype=int)
    n_clusters = 0
    # flood-fill connected components over core points only
    for seed in np.nonzero(core)[0]:
        if labels[seed] != -1:
            continue
        labels[seed] = n_clusters
        stack = [seed]
        while stack:
            i = stack.pop()
            for j in neighborhoods[i]:
                if core[j] and labels[j] == -1:
                    labels[j] = n_clusters
                    stack.append(j)
        n_clusters += 1

    # border points join the cluster of their nearest core neighbor
    for i in np.nonzero(~core)[0]:
        best = -1
        best_d = np.inf
        for j in neighborhoods[i]:
            if core[j]:
                d = np.hypot(*(xy[i] - xy[j]))
                if d < best_d:
                    best_d = d
                    best = j
        if best >= 0:
            labels[i] = labels[best]

    clusters = [Cluster(np.nonzero(labels == c)[0]) for c in range(n_clusters)]
    clusters.sort(key=lambda c: c.indices[0] if len(c) else -1)
    noise = np.nonzero(labels == -1)[0]
    return clusters, noise


def _power_weights(power: np.ndarray) -> np.ndarray:
    """Min-max normalize to [0, 1], then renormalize to sum to one.

    Equal powers (max == min) degenerate to uniform weights, as does a
    normalized vector summing to zero.
    """
    n = len(power)
    span = power.max() - power.min()
    if span <= 0:
        return np.full(n, 1.0 / n)
    w = (power - power.min()) / span
    s = w.sum()
    if s <= 0:
        return np.full(n, 1.0 / n)
    return w / s


def extension_observation(frame: Frame, cluster: Cluster) -> ExtensionObservation:
    """Power-weighted centroid and covariance ellipse of one cluster.

    The received powers act as weights: min-max normalized, then scaled to
    sum to one so the centroid is a convex combination of the points and the
    spread is a valid weighted sample covariance.  The reported full axis
    lengths are ``4 * sqrt(eigenvalue)`` (twice the two-sigma semi-axes,
    about 95% of the mass for Gaussian spread), floored at ``AXIS_FLOOR`` so
    degenerate clusters still yield a usable observation.
    """
    if len(cluster) == 0:
        raise ValueError("cluster must be non-empty")
    pts = frame.points[cluster.indices]
    xy = pts[:, :2]
    w = _power_weights(pts[:, 4])
    mu = w @ xy
    centered = xy - mu
    cov = (w[:, None] * centered).T @ centered
    cov = 0.5 * (cov + cov.T)

    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    major = eigvecs[:, order[0]]

    length = 4.0 * math.sqrt(eigvals[0])
    width = 4.0 * math.sqrt(eigvals[1])
    if eigvals[0] <= 1e-12:
        angle = 0.0
    else:
        angle = math.atan2(major[1], major[0]) % math.pi
    return ExtensionObservation(
        mu_x=float(mu[0]), mu_y=float(mu[1]),
        length=max(length, AXIS_FLOOR), width=max(width, AXIS_FLOOR),
        angle=angle)
