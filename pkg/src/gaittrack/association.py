"""Detection-to-track association and track lifecycle.

Association scores use the cheap-JPDA approximation: per pair, a Gaussian
likelihood of the position residual is normalized against the competing
pairings in the same row and column plus a bias term that stands in for the
missed-detection probability.  The final one-to-one pairing maximizes the
total score (Hungarian method), and matches below a confidence gate are
demoted to unmatched.

Track lifecycle follows m/n logic: a track survives while it was matched in
at least m of the last n frames, and an unmatched detection becomes a
confirmed track once seen m times within an n-frame window.  Tracks that
drift within ``eps`` of each other are thinned by dropping the one with the
largest covariance determinant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from gaittrack.tracking import Track

log = logging.getLogger(__name__)

DEFAULT_GATE = 0.05  # minimum association score for an accepted match


@dataclass
class Assignment:
    """One-to-one pairing between detections (rows) and tracks (columns)."""

    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)
    unmatched_tracks: list[int] = field(default_factory=list)

    def total(self, score: np.ndarray) -> float:
        return float(sum(score[n, t] for n, t in self.matches))


def cjpda_scores(pred_pos: np.ndarray, innov_cov: np.ndarray,
                 obs_pos: np.ndarray, beta: float) -> np.ndarray:
    """Cheap-JPDA association probabilities.

    Parameters
    ----------
    pred_pos : (T, 2) predicted track positions.
    innov_cov : (T, 2, 2) per-track position innovation covariance
        S = H P H^T + R restricted to the position block.
    obs_pos : (D, 2) observed cluster centroids.
    beta : missed-detection bias, > 0.

    Returns the (D, T) score matrix with entries

        Gamma[n, t] = G[n, t] / (row_sum[n] + col_sum[t] - G[n, t] + beta)

    where G[n, t] = det(S_t)^(-1/2) * exp(-0.5 * nu^T S_t^-1 nu) and nu is
    the position residual.  A singular S zeroes that track's column with a
    logged diagnostic.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    pred_pos = np.atleast_2d(pred_pos)
    obs_pos = np.atleast_2d(obs_pos)
    n_tracks = len(pred_pos)
    n_obs = len(obs_pos)
    G = np.zeros((n_obs, n_tracks))
    for t in range(n_tracks):
        S = innov_cov[t]
        det = np.linalg.det(S)
        if det <= 0 or not np.isfinite(det):
            log.warning("singular innovation covariance for track column %d; "
                        "scores zeroed", t)
            continue
        Sinv = np.linalg.inv(S)
        nu = obs_pos - pred_pos[t]
        maha = np.einsum("ni,ij,nj->n", nu, Sinv, nu)
        G[:, t] = np.exp(-0.5 * maha) / np.sqrt(det)
    denom = G.sum(axis=1, keepdims=True) + G.sum(axis=0, keepdims=True) - G + beta
    return G / denom


def hungarian(score: np.ndarray) -> Assignment:
    """Maximum-total-score one-to-one assignment.

    Rectangular matrices leave the surplus side unmatched.
    """
    score = np.atleast_2d(np.asarray(score, dtype=float))
    if score.size and not np.all(np.isfinite(score)):
        raise ValueError("score matrix entries must be finite")
    if score.size == 0:
        return Assignment(unmatched_detections=list(range(score.shape[0])),
                          unmatched_tracks=list(range(score.shape[1])))
    rows, cols = linear_sum_assignment(score, maximize=True)
    matches = [(int(r), int(c)) for r, c in zip(rows, cols)]
    return Assignment(
        matches=matches,
        unmatched_detections=[n for n in range(score.shape[0])
                              if n not in set(rows)],
        unmatched_tracks=[t for t in range(score.shape[1])
                          if t not in set(cols)])


def gate_and_associate(gamma: np.ndarray,
                       gate: float = DEFAULT_GATE) -> Assignment:
    """Hungarian assignment on the score matrix, then gate weak matches.

    Any accepted pairing whose score falls below ``gate`` is demoted to
    unmatched on both sides.
    """
    assignment = hungarian(gamma)
    kept = []
    for n, t in assignment.matches:
        if gamma[n, t] < gate:
            assignment.unmatched_detections.append(n)
            assignment.unmatched_tracks.append(t)
        else:
            kept.append((n, t))
    assignment.matches = kept
    assignment.unmatched_detections.sort()
    assignment.unmatched_tracks.sort()
    return assignment


def _can_still_confirm(track: Track, m: int, n: int) -> bool:
    # a young candidate is kept while m hits within some n-window remain possible
    age = len(track.hits)
    return track.hit_count() + (n - age) >= m


def lifecycle(tracks: list[Track], candidates: list[Track], m: int,
              n: int) -> tuple[list[Track], list[Track], list[Track]]:
    """Apply m/n retention and promotion after this frame's hits were recorded.

    Confirmed tracks are kept while they were matched in at least m of the
    last n frames.  Candidates are promoted once they reach m hits within the
    window; they are discarded when confirmation has become impossible or,
    once the full window is seen, whenever they fall below m hits.

    Returns ``(kept_tracks, kept_candidates, promoted)``; promoted tracks are
    included in ``kept_tracks``.
    """
    if m > n:
        raise ValueError("m must be <= n")
    kept = [t for t in tracks if t.hit_count(n) >= m]
    survivors: list[Track] = []
    promoted: list[Track] = []
    for cand in candidates:
        if cand.hit_count(n) >= m:
            cand.confirmed = True
            promoted.append(cand)
            kept.append(cand)
        elif len(cand.hits) >= n or not _can_still_confirm(cand, m, n):
            continue
        else:
            survivors.append(cand)
    return kept, survivors, promoted


def proximity_prune(tracks: list[Track], eps: float) -> list[Track]:
    """Remove the worse of any two tracks closer than ``eps``.

    For every pair with estimated positions within ``eps``, the track with
    the larger covariance determinant is dropped (det ties go against the
    younger track, i.e. the larger id); repeated until no violation remains.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    alive = list(tracks)
    while True:
        worst = None
        for i in range(len(alive)):
            for j in range(i + 1, len(alive)):
                a, b = alive[i], alive[j]
                d = np.hypot(a.state.x - b.state.x, a.state.y - b.state.y)
                if d < eps:
                    det_a = np.linalg.det(a.P)
                    det_b = np.linalg.det(b.P)
                    if det_a > det_b or (det_a == det_b and a.id > b.id):
                        loser = a
                    else:
                        loser = b
                    worst = loser
                    break
            if worst is not None:
                break
        if worst is None:
            return alive
        alive = [t for t in alive if t is not worst]
