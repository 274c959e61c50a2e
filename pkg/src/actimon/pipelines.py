"""Corpus-to-model orchestration shared by the CLI and the test suite:
loading manifests, extracting per-instance/per-window features, training the
three model kinds, and producing evaluation reports.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .activity import (
    ActivityClassifier,
    ActivityInstance,
    ConfusionMatrix,
    evaluate_classifier,
    parse_class,
    train_activity_classifier,
)
from .auth import (
    FEATURES_COMBINED,
    AuthDecision,
    UserProfile,
    auth_metrics,
    combine_features,
    enroll,
    identify_window,
    vote_identify,
)
from .errors import InputError
from .events import MODE_IMPACT_ONLY, MODE_THREE_STEP
from .features import (
    FeatureVector,
    activity_features,
    audio_auth_features,
    instance_features,
    motion_auth_features,
    shock_features,
)
from .models import MlpModel, TrainConfig, mlp_train
from .service import ALERT_RISKY_EVENT, PipelineConfig, PipelineModels, run_offline
from .signals import (
    AccelStream,
    AudioFrame,
    Window,
    audio_slice,
    high_pass,
    make_windows,
    read_audio,
    read_trace,
)

AUDIO_RATE_HZ = 8000.0


def load_manifest(corpus_dir) -> dict:
    path = Path(corpus_dir) / "manifest.json"
    if not path.exists():
        raise InputError(f"no manifest.json under {corpus_dir}")
    return json.loads(path.read_text())


def _entry_stream(corpus_dir: Path, entry: dict) -> AccelStream:
    return read_trace(corpus_dir / entry["file"])


def _entry_audio(corpus_dir: Path, entry: dict) -> list[AudioFrame]:
    if "audio_file" not in entry:
        return []
    return read_audio(corpus_dir / entry["audio_file"])


# --------------------------------------------------------------------------
# Activity classification
# --------------------------------------------------------------------------


def activity_instance_feature(
    stream: AccelStream, cutoff_hz: float = 0.5, sub_window_s: float = 2.0
) -> FeatureVector:
    """High-pass the trace, window it, and average window features into the
    instance vector."""
    filtered = high_pass(stream.to_g(), cutoff_hz)
    windows = make_windows(filtered, sub_window_s, sub_window_s)
    return instance_features([activity_features(w) for w in windows])


def load_activity_instances(corpus_dir, split: str | None = None) -> list[ActivityInstance]:
    corpus_dir = Path(corpus_dir)
    manifest = load_manifest(corpus_dir)
    out = []
    for entry in manifest["entries"]:
        if entry.get("kind") != "activity-instance":
            continue
        if split is not None and entry.get("split") != split:
            continue
        stream = _entry_stream(corpus_dir, entry)
        out.append(
            ActivityInstance(
                device_id=entry["id"],
                t_start=float(stream.t[0]),
                duration_s=stream.duration_s,
                feature=activity_instance_feature(stream),
                label=parse_class(entry["label"]),
            )
        )
    return out


def activity_report(matrix: ConfusionMatrix) -> dict:
    doc = matrix.to_dict()
    blocks = (("Walking", "Running"), ("Resting", "NoActivity"))
    classes = doc["classes"]
    within = cross = 0
    for i, true_c in enumerate(classes):
        for j, pred_c in enumerate(classes):
            if i == j:
                continue
            same_block = any(true_c in b and pred_c in b for b in blocks)
            if same_block:
                within += doc["counts"][i][j]
            else:
                cross += doc["counts"][i][j]
    doc["within_block_errors"] = within
    doc["cross_block_errors"] = cross
    return doc


def train_activity_from_corpus(corpus_dir, cfg: TrainConfig | None = None) -> ActivityClassifier:
    return train_activity_classifier(load_activity_instances(corpus_dir, "train"), cfg)


def eval_activity_corpus(corpus_dir, classifier: ActivityClassifier) -> dict:
    test = load_activity_instances(corpus_dir, "test")
    return activity_report(evaluate_classifier(classifier, test))


# --------------------------------------------------------------------------
# Shock model / event detection
# --------------------------------------------------------------------------

SHOCK_WINDOW_BEFORE_S = 0.3
SHOCK_WINDOW_AFTER_S = 0.7
NORMAL_WINDOW_START_S = 4.0


def _span_window(stream: AccelStream, t0: float, t1: float) -> Window:
    sel = (stream.t >= t0) & (stream.t < t1)
    return Window(t0, t1, stream.t[sel], stream.xyz[sel])


def _span_frame(frames: list[AudioFrame], t0: float, t1: float) -> AudioFrame:
    samples = audio_slice(frames, t0, t1)
    if len(samples) == 0:
        samples = np.zeros(max(2, int((t1 - t0) * 100)))
    return AudioFrame(t0, AUDIO_RATE_HZ, samples)


def shock_training_set(corpus_dir) -> tuple[list[FeatureVector], list[str]]:
    """Impact windows of training falls vs fixed interior windows of training
    normals, mirroring the shock/normal sample counts of the event recipe."""
    corpus_dir = Path(corpus_dir)
    manifest = load_manifest(corpus_dir)
    feats: list[FeatureVector] = []
    labels: list[str] = []
    for entry in manifest["entries"]:
        kind = entry.get("kind")
        if kind not in ("shock-train", "normal-train"):
            continue
        stream = _entry_stream(corpus_dir, entry).to_g()
        frames = _entry_audio(corpus_dir, entry)
        if kind == "shock-train":
            t_impact = entry["ground_truth"]["t_impact"]
            t0 = t_impact - SHOCK_WINDOW_BEFORE_S
            t1 = t_impact + SHOCK_WINDOW_AFTER_S
            labels.append("shock")
        else:
            t0 = NORMAL_WINDOW_START_S
            t1 = t0 + 1.0
            labels.append("normal")
        feats.append(shock_features(_span_window(stream, t0, t1), _span_frame(frames, t0, t1)))
    return feats, labels


def train_shock_from_corpus(corpus_dir, cfg: TrainConfig | None = None) -> MlpModel:
    feats, labels = shock_training_set(corpus_dir)
    return mlp_train(feats, labels, cfg, iterations=2000)


def eval_events_corpus(
    corpus_dir,
    shock_model: MlpModel,
    cfg: PipelineConfig | None = None,
) -> dict:
    """Run every eval episode through the detector in both modes and count
    alarms against the generator's ground truth."""
    corpus_dir = Path(corpus_dir)
    manifest = load_manifest(corpus_dir)
    cfg = cfg or PipelineConfig()
    models = PipelineModels(shock=shock_model)
    episodes = []
    for entry in manifest["entries"]:
        kind = entry.get("kind")
        if kind not in ("fall-abandoned", "fall-pickup", "normal-eval"):
            continue
        stream = _entry_stream(corpus_dir, entry)
        frames = _entry_audio(corpus_dir, entry)
        row = {"id": entry["id"], "kind": kind, "variant": entry.get("variant")}
        for mode, tag in ((MODE_THREE_STEP, "three_step"), (MODE_IMPACT_ONLY, "impact_only")):
            pipeline = run_offline(stream, frames, models, cfg, fsm_mode=mode)
            alarms = [a for a in pipeline.alerts if a.kind == ALERT_RISKY_EVENT]
            row[f"{tag}_alarms"] = len(alarms)
            if alarms and tag == "three_step":
                row["t_alarm"] = alarms[0].payload["t_alarm"]
        if "ground_truth" in entry:
            row["t_impact"] = entry["ground_truth"]["t_impact"]
        episodes.append(row)

    def count(kind: str, tag: str) -> int:
        return sum(1 for e in episodes if e["kind"] == kind and e[f"{tag}_alarms"] > 0)

    n_falls = sum(1 for e in episodes if e["kind"] == "fall-abandoned")
    n_negatives = sum(1 for e in episodes if e["kind"] != "fall-abandoned")
    report = {"episodes": episodes}
    for tag in ("three_step", "impact_only"):
        true_alarms = count("fall-abandoned", tag)
        false_alarms = count("fall-pickup", tag) + count("normal-eval", tag)
        correct = true_alarms + (n_negatives - false_alarms)
        report[tag] = {
            "true_alarms": true_alarms,
            "false_alarms": false_alarms,
            "episodes_positive": n_falls,
            "episodes_negative": n_negatives,
            "accuracy": correct / (n_falls + n_negatives) if episodes else 0.0,
        }
    return report


# --------------------------------------------------------------------------
# Identification / authentication
# --------------------------------------------------------------------------


def auth_window_rows(
    stream: AccelStream, frames: list[AudioFrame], window_s: float = 2.0
) -> list[tuple[float, FeatureVector, FeatureVector]]:
    """(t_end, motion features, audio features) per identification window.

    Windows are cut from the unfiltered stream; axis means would be nulled
    by the high-pass and they carry orientation signature.
    """
    rows = []
    for w in make_windows(stream.to_g(), window_s, window_s):
        samples = audio_slice(frames, w.t_start, w.t_end)
        if len(samples) == 0:
            samples = np.zeros(2)
        rows.append(
            (
                w.t_end,
                motion_auth_features(w),
                audio_auth_features(AudioFrame(w.t_start, AUDIO_RATE_HZ, samples)),
            )
        )
    return rows


def load_auth_dataset(corpus_dir) -> list[dict]:
    """Per-session window rows with user/session/split tags."""
    corpus_dir = Path(corpus_dir)
    manifest = load_manifest(corpus_dir)
    sessions = []
    for entry in manifest["entries"]:
        if entry.get("kind") != "auth-session":
            continue
        stream = _entry_stream(corpus_dir, entry)
        frames = _entry_audio(corpus_dir, entry)
        sessions.append(
            {
                "user": entry["user"],
                "session": entry["session"],
                "split": entry["split"],
                "rows": auth_window_rows(stream, frames),
            }
        )
    return sessions


def eval_auth_sessions(
    sessions: list[dict],
    feature_mode: str = FEATURES_COMBINED,
    cfg: TrainConfig | None = None,
    iterations: int | None = None,
    vote_period_s: float = 60.0,
) -> dict:
    """Enroll on the train split, identify each test window, vote per period."""
    cfg = cfg or TrainConfig()
    train_windows = []
    for s in sessions:
        if s["split"] != "train":
            continue
        for _, mfv, afv in s["rows"]:
            train_windows.append((s["user"], combine_features(mfv, afv, feature_mode)))
    model = enroll(train_windows, cfg, feature_mode, iterations=iterations)

    decisions: list[AuthDecision] = []
    labels: list[str] = []
    voted_hits = voted_total = 0
    per_window_rows = []
    for s in sessions:
        if s["split"] != "test":
            continue
        session_decisions = []
        for t, mfv, afv in s["rows"]:
            d = identify_window(t, combine_features(mfv, afv, feature_mode), model)
            decisions.append(d)
            labels.append(s["user"])
            session_decisions.append(d)
            per_window_rows.append((t, s["user"], d.user_id, d.score))
        if session_decisions:
            t0 = session_decisions[0].t
            period: list[AuthDecision] = []
            boundary = t0 + vote_period_s
            for d in session_decisions:
                if d.t > boundary:
                    if period:
                        voted_total += 1
                        voted_hits += vote_identify(period).user_id == s["user"]
                    period = []
                    boundary += vote_period_s
                period.append(d)
            if period:
                voted_total += 1
                voted_hits += vote_identify(period).user_id == s["user"]

    window_accuracy = float(np.mean([d.user_id == l for d, l in zip(decisions, labels)]))
    metrics = auth_metrics(decisions, labels)
    profiles: dict[str, UserProfile] = {}
    for s in sessions:
        if s["split"] != "train":
            continue
        p = profiles.setdefault(s["user"], UserProfile(s["user"]))
        p.sessions += 1
        p.total_windows += len(s["rows"])
    return {
        "feature_mode": feature_mode,
        "window_accuracy": window_accuracy,
        "voted_accuracy": voted_hits / voted_total if voted_total else 0.0,
        "voted_periods": voted_total,
        "metrics": metrics.to_dict(),
        "enrolled": {
            u: {"sessions": p.sessions, "windows": p.total_windows}
            for u, p in sorted(profiles.items())
        },
        "windows": per_window_rows,
        "model": model,
    }
