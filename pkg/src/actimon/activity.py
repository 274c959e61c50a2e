"""Activity-level estimation (peak/valley differences) and the four-class
activity classifier built from per-class Gaussian mixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError, InputError, InsufficientDataError, ModelError, SchemaError
from .features import FeatureVector, check_manifest, schema_manifest
from .models import (
    MODEL_FORMAT,
    MODEL_VERSION,
    GmmModel,
    TrainConfig,
    gmm_fit,
    gmm_loglik,
)

DEFAULT_MIN_PROMINENCE_G = 0.02
DEFAULT_INSTANCE_S = 10.0


class ActivityClass(str, Enum):
    WALKING = "Walking"
    RUNNING = "Running"
    RESTING = "Resting"
    NO_ACTIVITY = "NoActivity"


# fixed order, also the tie-break order for classification
CLASS_ORDER: tuple[ActivityClass, ...] = (
    ActivityClass.WALKING,
    ActivityClass.RUNNING,
    ActivityClass.RESTING,
    ActivityClass.NO_ACTIVITY,
)


def parse_class(name: str) -> ActivityClass:
    for c in ActivityClass:
        if c.value == name:
            return c
    raise DataError(f"unknown activity class {name!r}")


@dataclass
class ActivityInstance:
    device_id: str
    t_start: float
    duration_s: float
    feature: FeatureVector
    label: ActivityClass | None = None

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise DataError("instance duration must be > 0")
        if self.feature.schema_id != "activity":
            raise SchemaError("activity instances carry 'activity' schema features")


@dataclass(frozen=True)
class ActivityLevelPoint:
    t: float
    level: float  # g units, >= 0


class PeakValleyScanner:
    """Incremental peak-to-next-valley extractor over a magnitude series.

    A peak is a sample strictly greater than both neighbours (plateaus take
    the last sample of the plateau); the paired valley is the minimum value
    seen before the next peak (or the end of the series on flush).  Pairs
    with |peak - valley| below ``min_prominence`` are suppressed as jitter.

    The same scanner instance serves batch and live processing, which keeps
    both paths byte-identical.
    """

    def __init__(self, min_prominence: float = DEFAULT_MIN_PROMINENCE_G):
        self.min_prominence = float(min_prominence)
        self._last_t: float | None = None
        self._last_v: float | None = None
        self._trend = 0  # -1 falling, 0 unknown, +1 rising
        self._candidate: tuple[float, float] | None = None  # plateau-last extremum
        self._pending_peak: tuple[float, float] | None = None
        self._min_after: float | None = None
        self._out: list[ActivityLevelPoint] = []

    def _confirm_peak(self, peak: tuple[float, float]) -> None:
        if self._pending_peak is not None and self._min_after is not None:
            level = abs(self._pending_peak[1] - self._min_after)
            if level >= self.min_prominence:
                self._out.append(ActivityLevelPoint(self._pending_peak[0], level))
        self._pending_peak = peak
        self._min_after = None

    def push(self, t: float, v: float) -> None:
        if self._last_v is None:
            self._last_t, self._last_v = t, v
            return
        if v > self._last_v:
            new_trend = 1
        elif v < self._last_v:
            new_trend = -1
        else:
            new_trend = self._trend
        if new_trend == 1:
            self._candidate = (t, v)
        elif new_trend == -1 and self._trend == -1 and v == self._last_v:
            pass  # flat stretch while falling: keep earlier valley candidate
        if self._trend == 1 and new_trend == -1:
            self._confirm_peak(self._candidate or (self._last_t, self._last_v))
        if self._pending_peak is not None and (t, v) != self._pending_peak:
            self._min_after = v if self._min_after is None else min(self._min_after, v)
        self._trend = new_trend
        self._last_t, self._last_v = t, v

    def pop_points(self) -> list[ActivityLevelPoint]:
        out, self._out = self._out, []
        return out

    def flush(self) -> None:
        """Emit the final pending pair (series ended while descending)."""
        if self._pending_peak is not None and self._min_after is not None:
            level = abs(self._pending_peak[1] - self._min_after)
            if level >= self.min_prominence:
                self._out.append(ActivityLevelPoint(self._pending_peak[0], level))
        self._pending_peak = None
        self._min_after = None


def activity_level(
    t,
    mags,
    min_prominence: float = DEFAULT_MIN_PROMINENCE_G,
) -> list[ActivityLevelPoint]:
    """|peak - next valley| points of a high-passed magnitude series.

    One point per peak/valley pair, timestamped at the peak.  A monotone
    series has no interior peak and yields an empty list.
    """
    t = np.asarray(t, dtype=float)
    mags = np.asarray(mags, dtype=float)
    if len(mags) < 3:
        raise InsufficientDataError("activity level needs at least 3 samples")
    scanner = PeakValleyScanner(min_prominence)
    for ti, vi in zip(t, mags):
        scanner.push(float(ti), float(vi))
    scanner.flush()
    return scanner.pop_points()


@dataclass
class ConfusionMatrix:
    """(true, predicted) counts over CLASS_ORDER."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=int)
        if self.counts.shape != (4, 4) or np.any(self.counts < 0):
            raise DataError("confusion matrix must be 4x4 with counts >= 0")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    def recall(self, c: ActivityClass) -> float:
        i = CLASS_ORDER.index(c)
        row = self.counts[i].sum()
        return float(self.counts[i, i]) / row if row else 0.0

    def to_dict(self) -> dict:
        return {
            "classes": [c.value for c in CLASS_ORDER],
            "counts": self.counts.tolist(),
            "accuracy": self.accuracy,
            "recall": {c.value: self.recall(c) for c in CLASS_ORDER},
        }


@dataclass
class ActivityClassifier:
    """One GMM per activity class plus the shared feature schema manifest."""

    models: dict[ActivityClass, GmmModel]
    k: int

    def __post_init__(self) -> None:
        missing = [c.value for c in CLASS_ORDER if c not in self.models]
        if missing:
            raise DataError(f"classifier lacks models for: {missing}")

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "activity-classifier",
            "k": self.k,
            "feature_schema": schema_manifest("activity"),
            "models": {c.value: self.models[c].to_dict() for c in CLASS_ORDER},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ActivityClassifier":
        if not isinstance(doc, dict) or doc.get("kind") != "activity-classifier":
            raise ModelError("not an activity-classifier document")
        if doc.get("version") != MODEL_VERSION:
            raise ModelError(f"unsupported model version {doc.get('version')!r}")
        check_manifest(doc.get("feature_schema", {}))
        models = {
            parse_class(name): GmmModel.from_dict(sub) for name, sub in doc["models"].items()
        }
        return cls(models=models, k=int(doc.get("k", 2)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ActivityClassifier":
        path = Path(path)
        if not path.exists():
            raise InputError(f"classifier file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ModelError(f"corrupt classifier file {path}: {exc}") from exc
        return cls.from_dict(doc)


def train_activity_classifier(
    instances: list[ActivityInstance],
    cfg: TrainConfig | None = None,
) -> ActivityClassifier:
    """Fit one GMM per class on that class's instances only."""
    cfg = cfg or TrainConfig()
    by_class: dict[ActivityClass, list[FeatureVector]] = {c: [] for c in CLASS_ORDER}
    for inst in instances:
        if inst.label is None:
            raise DataError("training instances must be labeled")
        by_class[inst.label].append(inst.feature)
    models: dict[ActivityClass, GmmModel] = {}
    for c in CLASS_ORDER:
        feats = by_class[c]
        if len(feats) < cfg.k:
            raise DataError(f"class {c.value} has {len(feats)} instances, needs >= k={cfg.k}")
        models[c] = gmm_fit(feats, cfg.k, cfg, class_label=c.value)
    return ActivityClassifier(models=models, k=cfg.k)


def classify_activity(
    x: FeatureVector, classifier: ActivityClassifier
) -> tuple[ActivityClass, dict[ActivityClass, float]]:
    """Highest-likelihood class; ties broken by the fixed CLASS_ORDER."""
    scores = {c: gmm_loglik(classifier.models[c], x) for c in CLASS_ORDER}
    best = CLASS_ORDER[0]
    for c in CLASS_ORDER[1:]:
        if scores[c] > scores[best]:
            best = c
    return best, scores


def evaluate_classifier(
    classifier: ActivityClassifier, test: list[ActivityInstance]
) -> ConfusionMatrix:
    if not test:
        raise DataError("empty test set")
    counts = np.zeros((4, 4), dtype=int)
    for inst in test:
        if inst.label is None:
            raise DataError("test instances must be labeled")
        predicted, _ = classify_activity(inst.feature, classifier)
        counts[CLASS_ORDER.index(inst.label), CLASS_ORDER.index(predicted)] += 1
    return ConfusionMatrix(counts)
