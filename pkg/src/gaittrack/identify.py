"""Joint identity assignment and identity-driven track correction.

Per-track classifier outputs are unreliable frame to frame, so each track
keeps a stabilized belief vector over the known subjects.  Tracks recently
detected get an exponentially weighted moving-average update toward the new
classifier output; tracks with missing detections keep their last belief but
decay it geometrically, so stale identities lose confidence over time.
Labels are then assigned jointly across tracks with a Hungarian pass over the
stacked beliefs, which forbids duplicated identities; assignments whose score
falls below a confidence threshold become unknown.

When an already-labeled track switches to a different label, the track is
assumed to have been corrupted by an association error (typically a blockage
followed by reacquisition next to another subject): it is respawned under a
fresh index carrying its state, covariance and belief, while the accumulated
point-cloud buffer is discarded as no longer trustworthy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from gaittrack.tracking import Track

UNKNOWN: None = None


@dataclass
class IdentityBelief:
    """Stabilized per-subject scores for one track.

    Entries lie in [0, 1]; the vector sums to one right after a smoothing
    update and drifts below one under decay.
    """

    scores: np.ndarray
    last_update: int = -1

    @classmethod
    def uniform(cls, n_subjects: int) -> "IdentityBelief":
        return cls(scores=np.full(n_subjects, 1.0 / n_subjects))

    def copy(self) -> "IdentityBelief":
        return IdentityBelief(self.scores.copy(), self.last_update)


def smooth(belief: IdentityBelief, fresh: np.ndarray, rho: float,
           k: int) -> IdentityBelief:
    """Moving-average update toward a fresh classifier output, renormalized."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    scores = (1.0 - rho) * np.asarray(fresh, dtype=float) + rho * belief.scores
    total = scores.sum()
    if total > 0:
        scores = scores / total
    return IdentityBelief(scores=scores, last_update=k)


def decay(belief: IdentityBelief, gamma: float) -> IdentityBelief:
    """Geometric confidence decay for a track with missing detections.

    Deliberately not renormalized: the shrinking sum encodes staleness.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    return IdentityBelief(scores=gamma * belief.scores,
                          last_update=belief.last_update)


def assign_labels(beliefs: np.ndarray, p_conf: float) -> list[int | None]:
    """Unique labels from stacked beliefs via a confidence-gated Hungarian pass.

    Rows are tracks, columns subjects.  Each accepted pairing with a score
    below ``p_conf`` is demoted to UNKNOWN; with more tracks than subjects
    the surplus tracks are UNKNOWN.
    """
    beliefs = np.atleast_2d(beliefs)
    labels: list[int | None] = [UNKNOWN] * beliefs.shape[0]
    if beliefs.size == 0:
        return labels
    rows, cols = linear_sum_assignment(beliefs, maximize=True)
    for r, c in zip(rows, cols):
        if beliefs[r, c] >= p_conf:
            labels[r] = int(c)
    return labels


def joint_identify(tracks: list[Track], outputs: dict[int, np.ndarray],
                   rho: float, gamma: float, p_conf: float,
                   k: int = 0) -> dict[int, int | None]:
    """Update beliefs and jointly assign unique identities.

    ``outputs`` maps track id to the classifier probability vector for the
    tracks classified this frame; all other tracks decay.  Beliefs are
    mutated in place.  Returns ``{track id: label or UNKNOWN}``.

    Only tracks whose belief has ever absorbed a classifier output compete
    for labels; a track that was never classified holds a (decayed) uniform
    prior, which is no evidence at all -- letting it into the assignment
    would hand it an arbitrary tie-break label, steal that label from a
    genuinely classified track, and (worse) flip between frames as the ties
    drift, each flip spuriously triggering the track-correction respawn.
    """
    if not tracks:
        return {}
    for track in tracks:
        if track.belief is None:
            raise ValueError(f"track {track.id} has no identity belief")
        if track.id in outputs:
            track.belief = smooth(track.belief, outputs[track.id], rho, k)
        else:
            track.belief = decay(track.belief, gamma)
    scored = [t for t in tracks if t.belief.last_update >= 0]
    labels: dict[int, int | None] = {t.id: UNKNOWN for t in tracks}
    if scored:
        stacked = np.vstack([t.belief.scores for t in scored])
        for track, label in zip(scored, assign_labels(stacked, p_conf)):
            labels[track.id] = label
    return labels


def correct_tracks(tracks: list[Track], labels: dict[int, int | None],
                   next_id: int) -> tuple[list[Track], int, int]:
    """Respawn tracks whose identity switched between two known labels.

    For each track whose stored label and new label are both known and
    differ, a fresh track under an unused index takes over its state,
    covariance, belief and hit history; the point-cloud buffer is not
    carried over.  UNKNOWN transitions in either direction are first
    assignments or dropouts, not errors, and never trigger a respawn.

    Returns ``(updated tracks, next unused id, respawn count)``; the total
    number of tracks is preserved.
    """
    updated: list[Track] = []
    respawns = 0
    for track in tracks:
        new_label = labels.get(track.id, track.identity)
        if (track.identity is not UNKNOWN and new_label is not UNKNOWN
                and new_label != track.identity):
            fresh = Track(
                id=next_id,
                state=replace(track.state),
                P=track.P.copy(),
                identity=new_label,
                belief=track.belief.copy() if track.belief else None,
                hits=track.hits.copy(),
                confirmed=track.confirmed,
                buffer_size=track.buffer_size)
            next_id += 1
            respawns += 1
            updated.append(fresh)
        else:
            track.identity = new_label
            updated.append(track)
    return updated, next_id, respawns
