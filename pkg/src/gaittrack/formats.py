"""Line-oriented file formats and key=value configuration.

Every file starts with a one-line JSON header carrying ``format`` and
``version``; every following line is one self-delimiting JSON object.
Floats serialize via Python's shortest round-trip repr, which preserves the
exact value (at least 9 significant digits whenever they matter).

Frame files:   {"k": int, "points": [[x, y, z, v, power], ...],
                "gt": [{"subject": int, "x": float, "y": float}, ...]}
Report files:  {"k": int, "tracks": [{"id", "identity", "x", "y", "vx",
                "vy", "length", "width", "angle", "p_diag"}],
                "t_track_ms": float, "t_infer_ms": float}

Config files are ``key=value`` text with ``#`` comments; every key defaults
to the standard indoor-monitoring parameter set, and unknown keys are
rejected.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from gaittrack.classifier.training import TrainConfig
from gaittrack.clustering import Frame
from gaittrack.pipeline import FrameReport, PipelineConfig, TrackReport
from gaittrack.simulator import DEFAULT_FPS, Scenario, default_profiles
from gaittrack.tracking import NoiseConfig

FRAMES_FORMAT = "gaittrack-frames"
REPORT_FORMAT = "gaittrack-report"
FORMAT_VERSION = 1


# --------------------------------------------------------------------- #
# frame and report files

def _write_header(fh, fmt: str) -> None:
    fh.write(json.dumps({"format": fmt, "version": FORMAT_VERSION}) + "\n")


def _check_header(line: str, path, fmt: str) -> None:
    try:
        head = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:1: not a valid header line: {exc}") from exc
    if head.get("format") != fmt:
        raise ValueError(f"{path}:1: expected a {fmt} file, found "
                         f"{head.get('format')!r}")
    if head.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}:1: unsupported version {head.get('version')}")


def write_frames(path, frames, ground_truth=None) -> None:
    """Write frames (and optional per-frame ground truth) to a frames file."""
    with open(path, "w", encoding="utf-8") as fh:
        _write_header(fh, FRAMES_FORMAT)
        for i, frame in enumerate(frames):
            record = {"k": frame.k,
                      "points": [[float(v) for v in row]
                                 for row in frame.points]}
            if ground_truth is not None:
                record["gt"] = [{"subject": int(s), "x": float(x), "y": float(y)}
                                for s, x, y in ground_truth[i]]
            fh.write(json.dumps(record) + "\n")


def read_frames(path) -> tuple[list[Frame], list | None]:
    """Read a frames file; returns (frames, ground truth or None)."""
    frames: list[Frame] = []
    truth: list[list[tuple[int, float, float]]] = []
    has_gt = False
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        _check_header(first, path, FRAMES_FORMAT)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pts = np.array(rec["points"], dtype=float).reshape(-1, 5)
                frames.append(Frame(k=int(rec["k"]), points=pts))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed frame record: "
                                 f"{exc}") from exc
            if "gt" in rec:
                has_gt = True
                truth.append([(int(g["subject"]), float(g["x"]), float(g["y"]))
                              for g in rec["gt"]])
            else:
                truth.append([])
    return frames, (truth if has_gt else None)


def write_report(path, reports) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        _write_header(fh, REPORT_FORMAT)
        for rep in reports:
            fh.write(json.dumps(report_to_record(rep)) + "\n")


def report_to_record(rep: FrameReport) -> dict:
    return {
        "k": rep.k,
        "tracks": [{"id": t.id, "identity": t.identity, "x": t.x, "y": t.y,
                    "vx": t.vx, "vy": t.vy, "length": t.length,
                    "width": t.width, "angle": t.angle, "p_diag": t.p_diag}
                   for t in rep.tracks],
        "t_track_ms": rep.t_track_ms,
        "t_infer_ms": rep.t_infer_ms,
    }


def read_report(path) -> list[FrameReport]:
    reports: list[FrameReport] = []
    with open(path, "r", encoding="utf-8") as fh:
        _check_header(fh.readline(), path, REPORT_FORMAT)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                reports.append(FrameReport(
                    k=int(rec["k"]),
                    tracks=[TrackReport(
                        id=int(t["id"]),
                        identity=None if t["identity"] is None
                        else int(t["identity"]),
                        x=t["x"], y=t["y"], vx=t["vx"], vy=t["vy"],
                        length=t["length"], width=t["width"],
                        angle=t["angle"], p_diag=list(t["p_diag"]))
                        for t in rec["tracks"]],
                    t_track_ms=float(rec["t_track_ms"]),
                    t_infer_ms=float(rec["t_infer_ms"])))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed report record: "
                                 f"{exc}") from exc
    return reports


# --------------------------------------------------------------------- #
# key=value configuration

_PIPELINE_KEYS = {
    "eps": float, "min_pts": int, "beta": float, "gate": float,
    "m": int, "n": int, "n_max": int, "k_steps": int, "rho": float,
    "gamma": float, "p_conf": float, "num_subjects": int, "classify": bool,
    "dt": float, "seed": int,
    "sigma_accel": float, "sigma_len": float, "sigma_width": float,
    "sigma_orient": float, "sigma_range": float, "sigma_azimuth": float,
    "sigma_obs_len": float, "sigma_obs_width": float,
    "sigma_obs_orient": float,
}
_TRAIN_KEYS = {
    "learning_rate": float, "p_drop": float, "l2": float, "batch_size": int,
    "patience": int, "noise_range": float, "seed": int, "max_epochs": int,
    "val_fraction": float, "n_max": int,
}
_SCENARIO_KEYS = {
    "mode": str, "subjects": str, "duration": int, "blockage": bool,
    "seed": int, "fps": float, "minutes_per_subject": float, "rooms": int,
    "arena": str,
}
KNOWN_KEYS = {**_PIPELINE_KEYS, **_TRAIN_KEYS, **_SCENARIO_KEYS}


def parse_config(path) -> dict:
    """Parse a key=value config file; unknown keys are an error."""
    values: dict[str, object] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got "
                             f"{raw.strip()!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in KNOWN_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        caster = KNOWN_KEYS[key]
        try:
            if caster is bool:
                if val.lower() not in ("true", "false", "on", "off", "1", "0"):
                    raise ValueError(f"not a boolean: {val!r}")
                values[key] = val.lower() in ("true", "on", "1")
            else:
                values[key] = caster(val)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad value for {key}: "
                             f"{exc}") from exc
    return values


def pipeline_config_from(values: dict) -> PipelineConfig:
    noise_fields = {k: v for k, v in values.items()
                    if k in NoiseConfig.__dataclass_fields__}
    cfg_fields = {k: v for k, v in values.items()
                  if k in PipelineConfig.__dataclass_fields__ and k != "noise"}
    cfg = PipelineConfig(noise=NoiseConfig(**noise_fields), **cfg_fields)
    cfg.validate()
    return cfg


def train_config_from(values: dict) -> TrainConfig:
    fields = {k: v for k, v in values.items() if k in _TRAIN_KEYS}
    return TrainConfig(**fields)


def scenario_from(values: dict) -> Scenario:
    subjects = values.get("subjects", "0,1,2")
    ids = [int(s) for s in str(subjects).split(",") if s.strip() != ""]
    bank = default_profiles(max(ids) + 1 if ids else 3)
    profiles = [bank[i] for i in ids]
    kwargs = {
        "profiles": profiles,
        "duration": int(values.get("duration", 1200)),
        "blockage": bool(values.get("blockage", True)),
        "seed": int(values.get("seed", 0)),
        "fps": float(values.get("fps", DEFAULT_FPS)),
    }
    if "arena" in values:
        bounds = tuple(float(v) for v in str(values["arena"]).split(","))
        if len(bounds) != 4:
            raise ValueError("arena needs four comma-separated numbers: "
                             "x_lo,x_hi,y_lo,y_hi")
        kwargs["arena"] = bounds
    return Scenario(**kwargs)
