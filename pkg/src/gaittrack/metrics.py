"""Tracking and identification evaluation.

Per frame, ground-truth subjects and track hypotheses are matched one to one
by Euclidean distance (optimal assignment, gated at ``match_radius``).
Unmatched subjects count as misses, unmatched hypotheses as false positives,
and a matched subject whose hypothesis key differs from its previous one
counts as a mismatch; the tracking score is one minus the normalized sum of
the three.

With ``merge=True`` all hypotheses of one track are first relabeled by the
track's majority identity over the whole run, so tracks that were lost and
re-established under a new index (after blockage) merge back into one
hypothesis and stop producing mismatches.  Identification accuracy always
uses the identity reported at that frame, per subject over its matched
frames, and the sequence value weighs subjects by matched-frame count.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

log = logging.getLogger(__name__)

UNMATCHED_COST = 1e9


@dataclass
class EvalResult:
    mota: float
    misses: int
    false_positives: int
    mismatches: int
    gt_total: int
    per_subject_accuracy: dict[int, float] = field(default_factory=dict)
    per_subject_frames: dict[int, int] = field(default_factory=dict)
    weighted_accuracy: float = 0.0


def _majority_identity(hyp_stream) -> dict[int, int]:
    votes: dict[int, Counter] = defaultdict(Counter)
    for frame in hyp_stream:
        for tid, identity, _x, _y in frame:
            if identity is not None:
                votes[tid][identity] += 1
    return {tid: cnt.most_common(1)[0][0] for tid, cnt in votes.items()}


def _match_frame(gt, hyp, radius: float) -> list[tuple[int, int, float]]:
    """Gated min-distance assignment; returns (gt index, hyp index, distance)."""
    if not gt or not hyp:
        return []
    cost = np.full((len(gt), len(hyp)), UNMATCHED_COST)
    for i, (_s, gx, gy) in enumerate(gt):
        for j, (_t, _id, hx, hy) in enumerate(hyp):
            d = float(np.hypot(gx - hx, gy - hy))
            if d <= radius:
                cost[i, j] = d
    rows, cols = linear_sum_assignment(cost)
    return [(int(i), int(j), cost[i, j]) for i, j in zip(rows, cols)
            if cost[i, j] <= radius]


def evaluate(gt_stream, hyp_stream, match_radius: float = 1.0,
             merge: bool = True) -> EvalResult:
    """Full evaluation of frame-aligned ground-truth and hypothesis streams.

    ``gt_stream``: per frame, a list of ``(subject, x, y)``.
    ``hyp_stream``: per frame, a list of ``(track id, identity or None, x, y)``.
    """
    if len(gt_stream) != len(hyp_stream):
        raise ValueError("ground truth and hypothesis streams must be "
                         "frame-aligned")
    gt_total = sum(len(f) for f in gt_stream)
    if gt_total == 0:
        raise ValueError("evaluation undefined without ground-truth targets")

    merged_label = _majority_identity(hyp_stream) if merge else {}

    def hyp_key(tid: int) -> tuple:
        if merge and tid in merged_label:
            return ("identity", merged_label[tid])
        return ("track", tid)

    misses = fps = mismatches = 0
    last_key: dict[int, tuple] = {}
    matched_frames: dict[int, int] = defaultdict(int)
    correct_frames: dict[int, int] = defaultdict(int)
    seen_subjects: set[int] = set()

    for gt, hyp in zip(gt_stream, hyp_stream):
        seen_subjects.update(s for s, _x, _y in gt)
        pairs = _match_frame(gt, hyp, match_radius)
        misses += len(gt) - len(pairs)
        fps += len(hyp) - len(pairs)
        for i, j, _d in pairs:
            subject = gt[i][0]
            tid, identity = hyp[j][0], hyp[j][1]
            key = hyp_key(tid)
            if subject in last_key and last_key[subject] != key:
                mismatches += 1
            last_key[subject] = key
            matched_frames[subject] += 1
            if identity == subject:
                correct_frames[subject] += 1

    never_tracked = seen_subjects - set(matched_frames)
    for subject in sorted(never_tracked):
        log.warning("subject %s was never tracked; excluded from "
                    "identification accuracy", subject)

    per_acc = {s: correct_frames[s] / matched_frames[s]
               for s in sorted(matched_frames)}
    total_matched = sum(matched_frames.values())
    weighted = (sum(correct_frames.values()) / total_matched
                if total_matched else 0.0)
    return EvalResult(
        mota=1.0 - (misses + fps + mismatches) / gt_total,
        misses=misses, false_positives=fps, mismatches=mismatches,
        gt_total=gt_total,
        per_subject_accuracy=per_acc,
        per_subject_frames=dict(matched_frames),
        weighted_accuracy=weighted)


def mota(gt_stream, hyp_stream, match_radius: float = 1.0,
         merge: bool = True) -> EvalResult:
    """Tracking accuracy; see ``evaluate`` for stream formats."""
    return evaluate(gt_stream, hyp_stream, match_radius, merge)


def id_accuracy(gt_stream, hyp_stream, match_radius: float = 1.0) -> EvalResult:
    """Per-subject and frame-weighted identification accuracy."""
    return evaluate(gt_stream, hyp_stream, match_radius, merge=True)


def reports_to_hypotheses(reports) -> list[list[tuple[int, int | None, float, float]]]:
    """Adapt a pipeline report stream to the evaluation hypothesis format."""
    return [[(t.id, t.identity, t.x, t.y) for t in r.tracks] for r in reports]
