"""Clustering and extension observations against brute-force references."""

import math

import numpy as np
import pytest
from scipy.spatial import Delaunay

from gaittrack.clustering import (
    AXIS_FLOOR,
    Cluster,
    Frame,
    dbscan,
    extension_observation,
)


def naive_dbscan(xy: np.ndarray, eps: float, min_pts: int):
    """O(n^2) reference with the same conventions as the implementation:

    neighbor counts include the point itself, the eps boundary is inclusive,
    clusters are connected components of core points, border points join
    their nearest core point's cluster.
    """
    n = len(xy)
    dist = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1))
    inside = dist <= eps
    core = inside.sum(axis=1) >= min_pts
    labels = np.full(n, -1)
    n_clusters = 0
    for i in range(n):
        if not core[i] or labels[i] != -1:
            continue
        frontier = [i]
        labels[i] = n_clusters
        while frontier:
            a = frontier.pop()
            for b in range(n):
                if core[b] and labels[b] == -1 and inside[a, b]:
                    labels[b] = n_clusters
                    frontier.append(b)
        n_clusters += 1
    for i in range(n):
        if core[i] or labels[i] != -1:
            continue
        candidates = [j for j in range(n) if core[j] and inside[i, j]]
        if candidates:
            labels[i] = labels[min(candidates, key=lambda j: dist[i, j])]
    return labels


def as_partition(clusters, noise, n):
    labels = np.full(n, -1)
    for c, cluster in enumerate(clusters):
        labels[cluster.indices] = c
    return labels


def partitions_equal(a: np.ndarray, b: np.ndarray) -> bool:
    # identical up to label permutation; noise (-1) must match exactly
    if not np.array_equal(a == -1, b == -1):
        return False
    mapping = {}
    for la, lb in zip(a, b):
        if la == -1:
            continue
        if mapping.setdefault(la, lb) != lb:
            return False
    return len(set(mapping.values())) == len(mapping)


def make_frame(xy: np.ndarray) -> Frame:
    pts = np.zeros((len(xy), 5))
    pts[:, :2] = xy
    pts[:, 4] = 1.0
    return Frame(k=0, points=pts)


class TestDbscan:
    def test_dense_disc_single_cluster(self):
        rng = np.random.default_rng(0)
        xy = 0.05 * rng.standard_normal((12, 2)).clip(-1, 1)
        clusters, noise = dbscan(make_frame(xy), eps=0.4, min_pts=10)
        assert len(clusters) == 1
        assert len(clusters[0]) == 12
        assert len(noise) == 0

    def test_isolated_points_all_noise(self):
        xy = np.array([[0.0, 0], [2, 0], [0, 2], [4, 4], [6, 1]])
        clusters, noise = dbscan(make_frame(xy), eps=0.4, min_pts=10)
        assert clusters == []
        assert len(noise) == 5

    def test_empty_frame(self):
        clusters, noise = dbscan(Frame(k=0), eps=0.4, min_pts=10)
        assert clusters == [] and len(noise) == 0

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            xy = rng.uniform(0, 6, size=(300, 2))
            frame = make_frame(xy)
            clusters, noise = dbscan(frame, eps=0.4, min_pts=10)
            got = as_partition(clusters, noise, 300)
            want = naive_dbscan(xy, eps=0.4, min_pts=10)
            assert partitions_equal(got, want)

    def test_order_invariance(self):
        rng = np.random.default_rng(3)
        xy = np.concatenate([rng.normal(0, 0.15, (30, 2)),
                             rng.normal(3, 0.15, (25, 2)),
                             rng.uniform(-2, 5, (20, 2))])
        frame = make_frame(xy)
        base = as_partition(*dbscan(frame, 0.4, 10), len(xy))
        for _ in range(5):
            perm = rng.permutation(len(xy))
            shuffled = as_partition(*dbscan(make_frame(xy[perm]), 0.4, 10),
                                    len(xy))
            # map back to original order and compare as partitions
            unshuffled = np.empty_like(shuffled)
            unshuffled[perm] = shuffled
            assert partitions_equal(base, unshuffled)

    def test_emitted_clusters_have_min_size(self):
        rng = np.random.default_rng(9)
        xy = rng.uniform(0, 4, size=(200, 2))
        clusters, _ = dbscan(make_frame(xy), eps=0.35, min_pts=8)
        assert all(len(c) >= 8 for c in clusters)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            dbscan(Frame(k=0), eps=0.0, min_pts=10)
        with pytest.raises(ValueError):
            dbscan(Frame(k=0), eps=0.4, min_pts=0)


class TestExtensionObservation:
    def test_symmetric_cross(self):
        xy = np.array([[1.0, 0], [-1, 0], [0, 0.5], [0, -0.5]])
        frame = make_frame(xy)
        obs = extension_observation(frame, Cluster(np.arange(4)))
        assert obs.mu_x == pytest.approx(0.0)
        assert obs.mu_y == pytest.approx(0.0)
        assert obs.angle == pytest.approx(0.0)
        assert obs.length / obs.width == pytest.approx(2.0)

    def test_coincident_points_floored(self):
        pts = np.zeros((5, 5))
        pts[:, 0] = 1.0
        pts[:, 1] = 2.0
        pts[:, 4] = np.arange(5)
        obs = extension_observation(Frame(k=0, points=pts),
                                    Cluster(np.arange(5)))
        assert obs.length == AXIS_FLOOR
        assert obs.width == AXIS_FLOOR
        assert obs.angle == 0.0

    def test_single_point_cluster(self):
        pts = np.array([[0.5, 1.5, 0, 0, 3.0]])
        obs = extension_observation(Frame(k=0, points=pts), Cluster([0]))
        assert (obs.mu_x, obs.mu_y) == (0.5, 1.5)
        assert obs.length == AXIS_FLOOR and obs.width == AXIS_FLOOR

    def test_empty_cluster_rejected(self):
        with pytest.raises(ValueError):
            extension_observation(Frame(k=0), Cluster([]))

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            pts = np.zeros((30, 5))
            pts[:, :2] = rng.normal(2, 0.3, (30, 2))
            pts[:, 4] = rng.uniform(0.1, 9.0, 30)
            frame = Frame(k=0, points=pts)
            obs = extension_observation(frame, Cluster(np.arange(30)))

            # independent summation oracle
            p = pts[:, 4]
            w = (p - p.min()) / (p.max() - p.min())
            w = w / w.sum()
            mu = np.zeros(2)
            for i in range(30):
                mu += w[i] * pts[i, :2]
            cov = np.zeros((2, 2))
            for i in range(30):
                d = pts[i, :2] - mu
                cov += w[i] * np.outer(d, d)
            assert np.allclose([obs.mu_x, obs.mu_y], mu, atol=1e-9)
            eigvals = np.sort(np.linalg.eigvalsh(cov))[::-1]
            assert obs.length == pytest.approx(4 * math.sqrt(eigvals[0]),
                                               abs=1e-9)
            assert obs.width == pytest.approx(4 * math.sqrt(eigvals[1]),
                                              abs=1e-9)

    def test_centroid_in_convex_hull(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            pts = np.zeros((15, 5))
            pts[:, :2] = rng.uniform(-1, 1, (15, 2))
            pts[:, 4] = rng.uniform(0, 5, 15)
            obs = extension_observation(Frame(k=0, points=pts),
                                        Cluster(np.arange(15)))
            hull = Delaunay(pts[:, :2])
            assert hull.find_simplex([obs.mu_x, obs.mu_y]) >= 0

    def test_covariance_psd_and_axis_order(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            n = rng.integers(2, 40)
            pts = np.zeros((n, 5))
            pts[:, :2] = rng.normal(0, rng.uniform(0.05, 1.0), (n, 2))
            pts[:, 4] = rng.uniform(0, 3, n)
            obs = extension_observation(Frame(k=0, points=pts),
                                        Cluster(np.arange(n)))
            assert obs.length >= obs.width >= 0
            assert 0.0 <= obs.angle < math.pi

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(17)
        pts = np.zeros((25, 5))
        pts[:, 0] = rng.normal(0, 0.5, 25)
        pts[:, 1] = rng.normal(0, 0.1, 25)
        pts[:, 4] = rng.uniform(0.5, 2.0, 25)
        base = extension_observation(Frame(k=0, points=pts),
                                     Cluster(np.arange(25)))
        for rho in (0.3, 1.1, 2.7):
            c, s = math.cos(rho), math.sin(rho)
            rotated = pts.copy()
            rotated[:, :2] = pts[:, :2] @ np.array([[c, s], [-s, c]])
            obs = extension_observation(Frame(k=0, points=rotated),
                                        Cluster(np.arange(25)))
            assert obs.length == pytest.approx(base.length, abs=1e-9)
            assert obs.width == pytest.approx(base.width, abs=1e-9)
            want = (base.angle + rho) % math.pi
            diff = abs(obs.angle - want) % math.pi
            assert min(diff, math.pi - diff) < 1e-9
