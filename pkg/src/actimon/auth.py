"""Implicit user identification from motion/audio windows, with plurality
voting over longer periods, authentication metrics, and a graded security
level derived from recent decisions and risky-event alarms.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DataError, ParameterError, SchemaError
from .features import FeatureVector
from .models import MlpModel, TrainConfig, mlp_train

FEATURES_COMBINED = "combined"  # motion(11) + audio(4) concatenated
FEATURES_MOTION = "motion"
FEATURES_AUDIO = "audio"

FEATURE_DIMS = {FEATURES_COMBINED: 15, FEATURES_MOTION: 11, FEATURES_AUDIO: 4}

MIN_WINDOWS_PER_USER = 30
VOTE_PERIOD_S = 60.0

MODE_PER_WINDOW = "per-window"
MODE_VOTED = "voted"


class SecurityLevel(str, Enum):
    TRUSTED = "Trusted"
    ELEVATED = "Elevated"
    LOCKED = "Locked"


@dataclass
class AuthConfig:
    owner: str = ""
    trusted_score: float = 0.8
    stale_after_s: float = 300.0
    vote_period_s: float = VOTE_PERIOD_S

    def __post_init__(self) -> None:
        if not (0 < self.trusted_score <= 1) or self.stale_after_s <= 0 or self.vote_period_s <= 0:
            raise ParameterError("auth thresholds must be positive (score in (0, 1])")


@dataclass
class UserProfile:
    user_id: str
    sessions: int = 0
    total_windows: int = 0


@dataclass(frozen=True)
class AuthDecision:
    t: float
    user_id: str
    score: float  # probability (per-window) or vote fraction (voted)
    mode: str = MODE_PER_WINDOW
    users: tuple[str, ...] = ()
    probs: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise DataError(f"decision score {self.score} outside [0, 1]")
        if self.probs and len(self.probs) != len(self.users):
            raise DataError("probs and users must be aligned")


def combine_features(motion: FeatureVector, audio: FeatureVector, mode: str) -> np.ndarray:
    """Flatten one identification window into the configured feature layout."""
    if mode == FEATURES_MOTION:
        return motion.as_array()
    if mode == FEATURES_AUDIO:
        return audio.as_array()
    if mode == FEATURES_COMBINED:
        return np.concatenate([motion.as_array(), audio.as_array()])
    raise ParameterError(f"unknown auth feature mode {mode!r}")


def enroll(
    windows: list[tuple[str, np.ndarray]],
    cfg: TrainConfig | None = None,
    feature_mode: str = FEATURES_COMBINED,
    iterations: int | None = None,
) -> MlpModel:
    """Train one multi-class identifier over all enrolled users.

    ``windows`` is (user_id, flattened feature row) per 2 s window.  Requires
    at least 2 users with MIN_WINDOWS_PER_USER windows each.
    """
    if feature_mode not in FEATURE_DIMS:
        raise ParameterError(f"unknown auth feature mode {feature_mode!r}")
    users: dict[str, int] = {}
    for user_id, _ in windows:
        users[user_id] = users.get(user_id, 0) + 1
    if len(users) < 2:
        raise DataError("enrollment needs at least 2 users")
    thin = [u for u, n in users.items() if n < MIN_WINDOWS_PER_USER]
    if thin:
        raise DataError(f"users with fewer than {MIN_WINDOWS_PER_USER} windows: {sorted(thin)}")
    X = np.stack([row for _, row in windows])
    if X.shape[1] != FEATURE_DIMS[feature_mode]:
        raise SchemaError(
            f"feature mode {feature_mode!r} expects {FEATURE_DIMS[feature_mode]} dims, "
            f"got {X.shape[1]}"
        )
    labels = [user_id for user_id, _ in windows]
    return mlp_train(X, labels, cfg, iterations=iterations)


def identify_window(t: float, x: np.ndarray, m: MlpModel) -> AuthDecision:
    """Arg-max user for one window, with the full probability row attached."""
    x = np.asarray(x, dtype=float)
    if x.shape != (m.input_dim,):
        raise SchemaError(f"identifier expects {m.input_dim} dims, got {x.shape}")
    probs = m.forward(x[None, :])[0]
    best = int(np.argmax(probs))
    return AuthDecision(
        t=t,
        user_id=m.class_labels[best],
        score=float(probs[best]),
        mode=MODE_PER_WINDOW,
        users=tuple(m.class_labels),
        probs=tuple(float(p) for p in probs),
    )


def vote_identify(decisions: list[AuthDecision]) -> AuthDecision:
    """Plurality user over a period; score is the winner's vote fraction.

    Ties break by higher mean per-window score, then by sorted user id.
    """
    if not decisions:
        raise DataError("cannot vote over zero decisions")
    votes: dict[str, int] = {}
    score_sums: dict[str, float] = {}
    for d in decisions:
        votes[d.user_id] = votes.get(d.user_id, 0) + 1
        score_sums[d.user_id] = score_sums.get(d.user_id, 0.0) + d.score
    users = sorted(votes)

    def rank(u: str) -> tuple[float, float, int]:
        return (votes[u], score_sums[u] / votes[u], -users.index(u))

    winner = max(users, key=rank)
    n = len(decisions)
    return AuthDecision(
        t=max(d.t for d in decisions),
        user_id=winner,
        score=votes[winner] / n,
        mode=MODE_VOTED,
        users=tuple(users),
        probs=tuple(votes[u] / n for u in users),
    )


@dataclass
class AuthMetrics:
    per_user: dict[str, dict[str, float]]  # precision/recall/f_measure/roc_area/support
    weighted: dict[str, float]

    def to_dict(self) -> dict:
        return {"per_user": self.per_user, "weighted_average": self.weighted}


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged (midrank convention)."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_area(scores: np.ndarray, positives: np.ndarray) -> float:
    """Rank-statistic (Mann-Whitney) AUC with midrank tie handling."""
    scores = np.asarray(scores, dtype=float)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.0
    ranks = _average_ranks(scores)
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auth_metrics(predictions: list[AuthDecision], labels: list[str]) -> AuthMetrics:
    """One-vs-rest precision/recall/F and ROC area per user, plus
    support-weighted averages.

    ROC uses each decision's per-user probability row; decisions produced by
    identify_window and vote_identify always carry one.
    """
    if len(predictions) != len(labels):
        raise DataError("predictions and labels must have equal length")
    if not predictions:
        raise DataError("cannot compute metrics over zero examples")
    users = sorted(set(labels))
    per_user: dict[str, dict[str, float]] = {}
    y_pred = [d.user_id for d in predictions]
    for u in users:
        tp = sum(1 for p, l in zip(y_pred, labels) if p == u and l == u)
        fp = sum(1 for p, l in zip(y_pred, labels) if p == u and l != u)
        fn = sum(1 for p, l in zip(y_pred, labels) if p != u and l == u)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f_measure = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores = np.array([_user_score(d, u) for d in predictions])
        area = roc_area(scores, np.array([l == u for l in labels]))
        per_user[u] = {
            "precision": precision,
            "recall": recall,
            "f_measure": f_measure,
            "roc_area": area,
            "support": float(labels.count(u)),
        }
    total = float(len(labels))
    weighted = {
        key: sum(per_user[u][key] * per_user[u]["support"] for u in users) / total
        for key in ("precision", "recall", "f_measure", "roc_area")
    }
    return AuthMetrics(per_user=per_user, weighted=weighted)


def _user_score(d: AuthDecision, user: str) -> float:
    if d.probs and user in d.users:
        return d.probs[d.users.index(user)]
    # degenerate fallback: spread the residual over the other users
    if d.user_id == user:
        return d.score
    n_other = max(len(d.users) - 1, 1)
    return (1.0 - d.score) / n_other


def security_level(
    recent: list[AuthDecision],
    alarm_times: list[float],
    now: float,
    cfg: AuthConfig,
) -> SecurityLevel:
    """Graded security from the latest voted decision and intervening alarms.

    Locked: a risky alarm since the last voted decision, or that decision
    names someone other than the owner.  Trusted: a fresh owner-matching vote
    at or above the trusted score.  Anything weaker or staler is Elevated.
    """
    voted = [d for d in recent if d.mode == MODE_VOTED]
    last = max(voted, key=lambda d: d.t) if voted else None
    last_t = last.t if last is not None else float("-inf")
    if any(last_t < at <= now for at in alarm_times):
        return SecurityLevel.LOCKED
    if last is None:
        return SecurityLevel.ELEVATED
    if last.user_id != cfg.owner:
        return SecurityLevel.LOCKED
    if now - last.t > cfg.stale_after_s:
        return SecurityLevel.ELEVATED
    if last.score >= cfg.trusted_score:
        return SecurityLevel.TRUSTED
    return SecurityLevel.ELEVATED
