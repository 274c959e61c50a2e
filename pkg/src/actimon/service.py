"""Multi-device monitoring core: per-device analysis pipelines, append-only
history/alert logs, queries, and alert fan-out.

Determinism contract: all processing is driven by stream time, never wall
clock, and every analysis unit (event cell, identification window, vote,
activity tick) fires in a single time-ordered loop.  Streaming a trace in
arbitrary chunks therefore produces byte-identical logs to one-shot batch
processing of the same trace, which is the core replay invariant.
"""

from __future__ import annotations

import json
import queue
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .activity import (
    ActivityClassifier,
    PeakValleyScanner,
    classify_activity,
    DEFAULT_MIN_PROMINENCE_G,
)
from .auth import (
    FEATURE_DIMS,
    AuthConfig,
    AuthDecision,
    SecurityLevel,
    combine_features,
    identify_window,
    security_level,
    vote_identify,
)
from .errors import (
    ActimonError,
    DataError,
    InputError,
    ParameterError,
    SchemaError,
    StreamError,
)
from .events import EventConfig, MODE_THREE_STEP, ObservationBuilder, RiskyEventFsm
from .features import activity_features, audio_auth_features, instance_features, motion_auth_features
from .models import MlpModel
from .signals import (
    AccelStream,
    AudioFrame,
    G0_MPS2,
    HighPassFilter,
    UNIT_G,
    Window,
    audio_slice,
    canonical_json,
    magnitude_series,
)

ALERT_RISKY_EVENT = "RiskyEvent"
ALERT_HIGH_ACTIVITY = "HighActivity"
ALERT_LOW_ACTIVITY = "LowActivity"
ALERT_IDLE_TIMEOUT = "IdleTimeout"
ALERT_AUTH_LOCKED = "AuthLocked"
ALERT_STREAM_GAP = "StreamGap"

ALERT_KINDS = (
    ALERT_RISKY_EVENT,
    ALERT_HIGH_ACTIVITY,
    ALERT_LOW_ACTIVITY,
    ALERT_IDLE_TIMEOUT,
    ALERT_AUTH_LOCKED,
    ALERT_STREAM_GAP,
)

PRIVACY_FULL = "full"
PRIVACY_COARSE = "coarse"


@dataclass
class PipelineConfig:
    filter_cutoff_hz: float = 0.5
    level_min_prominence_g: float = DEFAULT_MIN_PROMINENCE_G
    tick_s: float = 10.0
    auth_window_s: float = 2.0
    event: EventConfig = field(default_factory=EventConfig)
    auth: AuthConfig = field(default_factory=AuthConfig)
    high_activity_level_g: float = 0.6
    high_activity_window_s: float = 30.0
    low_activity_level_g: float = 0.02
    low_activity_window_s: float = 600.0
    idle_timeout_s: float = 1800.0
    idle_level_g: float = 0.05
    # invented linear mapping, indicative only: kcal = c * sum(level * dt)
    calorie_kcal_per_g_s: float = 0.05
    seq_gap_limit: int = 1000

    def __post_init__(self) -> None:
        positives = (
            self.filter_cutoff_hz,
            self.tick_s,
            self.auth_window_s,
            self.high_activity_level_g,
            self.high_activity_window_s,
            self.low_activity_level_g,
            self.low_activity_window_s,
            self.idle_timeout_s,
            self.calorie_kcal_per_g_s,
        )
        if any(v <= 0 for v in positives):
            raise ParameterError("pipeline thresholds must be positive")
        if self.seq_gap_limit < 1:
            raise ParameterError("seq_gap_limit must be >= 1")

    def to_dict(self) -> dict:
        return {
            "filter_cutoff_hz": self.filter_cutoff_hz,
            "level_min_prominence_g": self.level_min_prominence_g,
            "tick_s": self.tick_s,
            "auth_window_s": self.auth_window_s,
            "event": {
                "freefall_threshold_g": self.event.freefall_threshold_g,
                "freefall_min_duration_s": self.event.freefall_min_duration_s,
                "impact_window_s": self.event.impact_window_s,
                "quiet_duration_s": self.event.quiet_duration_s,
                "quiet_threshold_g": self.event.quiet_threshold_g,
                "shock_probability_threshold": self.event.shock_probability_threshold,
            },
            "auth": {
                "owner": self.auth.owner,
                "trusted_score": self.auth.trusted_score,
                "stale_after_s": self.auth.stale_after_s,
                "vote_period_s": self.auth.vote_period_s,
            },
            "high_activity_level_g": self.high_activity_level_g,
            "high_activity_window_s": self.high_activity_window_s,
            "low_activity_level_g": self.low_activity_level_g,
            "low_activity_window_s": self.low_activity_window_s,
            "idle_timeout_s": self.idle_timeout_s,
            "idle_level_g": self.idle_level_g,
            "calorie_kcal_per_g_s": self.calorie_kcal_per_g_s,
            "seq_gap_limit": self.seq_gap_limit,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        doc = dict(doc)
        event = EventConfig(**doc.pop("event", {}))
        auth = AuthConfig(**doc.pop("auth", {}))
        known = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        unknown = set(doc) - set(known)
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(event=event, auth=auth, **known)


@dataclass
class PipelineModels:
    classifier: ActivityClassifier | None = None
    shock: MlpModel | None = None
    identifier: MlpModel | None = None

    @property
    def auth_feature_mode(self) -> str | None:
        if self.identifier is None:
            return None
        for mode, dim in FEATURE_DIMS.items():
            if dim == self.identifier.input_dim:
                return mode
        raise SchemaError(
            f"identifier input dim {self.identifier.input_dim} matches no auth feature mode"
        )


@dataclass
class HistoryRecord:
    device_id: str
    t: float
    level: float
    activity_class: str | None = None
    auth_user: str | None = None
    auth_score: float | None = None
    security: str | None = None
    kcal_indicative: float = 0.0

    def to_record(self) -> dict:
        # None-valued analysis fields are omitted entirely, so coarse-privacy
        # records carry level and the indicative calorie figure only
        doc = {
            "device_id": self.device_id,
            "t": self.t,
            "level": self.level,
            "kcal_indicative": self.kcal_indicative,
        }
        for key, value in (
            ("activity_class", self.activity_class),
            ("auth_user", self.auth_user),
            ("auth_score", self.auth_score),
            ("security", self.security),
        ):
            if value is not None:
                doc[key] = value
        return doc


@dataclass
class AlertRecord:
    device_id: str
    t: float
    kind: str
    alert_id: str
    payload: dict = field(default_factory=dict)
    acknowledged: bool = False
    ack_note: str = ""

    def to_record(self) -> dict:
        return {
            "device_id": self.device_id,
            "t": self.t,
            "kind": self.kind,
            "alert_id": self.alert_id,
            "payload": self.payload,
        }

    def to_view(self) -> dict:
        doc = self.to_record()
        doc["acknowledged"] = self.acknowledged
        doc["ack_note"] = self.ack_note
        return doc


class DevicePipeline:
    """Streaming analysis state for one device.

    Feed chunks of samples (already in g) and audio frames in time order;
    emitted history records and alerts come back in deterministic stream-time
    order regardless of the chunking.
    """

    def __init__(
        self,
        device_id: str,
        rate_hz: float,
        models: PipelineModels,
        cfg: PipelineConfig | None = None,
        privacy: str = PRIVACY_FULL,
        fsm_mode: str = MODE_THREE_STEP,
    ):
        if privacy not in (PRIVACY_FULL, PRIVACY_COARSE):
            raise ParameterError(f"unknown privacy mode {privacy!r}")
        self.device_id = device_id
        self.rate_hz = float(rate_hz)
        self.cfg = cfg or PipelineConfig()
        self.models = models
        self.privacy = privacy
        self._dt = 1.0 / self.rate_hz

        self._axis_filters = [
            HighPassFilter(self.rate_hz, self.cfg.filter_cutoff_hz) for _ in range(3)
        ]
        self._mag_filter = HighPassFilter(self.rate_hz, self.cfg.filter_cutoff_hz)
        self._scanner = PeakValleyScanner(self.cfg.level_min_prominence_g)

        self._events_on = models.shock is not None
        self._builder = (
            ObservationBuilder(self.cfg.event, models.shock) if self._events_on else None
        )
        self._fsm = (
            RiskyEventFsm(device_id, self.cfg.event, fsm_mode) if self._events_on else None
        )

        self._auth_on = models.identifier is not None and privacy == PRIVACY_FULL
        self._classify_on = models.classifier is not None and privacy == PRIVACY_FULL

        # trailing raw/filtered buffers for window extraction
        self._t: list[float] = []
        self._xyz: list[tuple[float, float, float]] = []
        self._fxyz: list[tuple[float, float, float]] = []
        self._frames: list[AudioFrame] = []

        self._t0: float | None = None
        self._last_t: float | None = None
        self._next_tick: float | None = None
        self._next_auth: float | None = None
        self._next_vote: float | None = None

        self._level_points: list = []  # confirmed, not yet assigned to a tick
        self._recent_points: list = []  # (t, level) trailing for high-activity
        self._tick_levels: list = []  # (t, mean level) trailing for low-activity
        self._decisions: list[AuthDecision] = []
        self._voted: list[AuthDecision] = []
        self._alarm_times: list[float] = []
        self._security = SecurityLevel.ELEVATED if self._auth_on else None
        self._kcal = 0.0
        self._last_active_t: float | None = None
        self._alert_seq = 0
        self._high_armed = True
        self._low_armed = True
        self._idle_armed = True
        self._finished = False

        self.history: list[HistoryRecord] = []
        self.alerts: list[AlertRecord] = []

    # -- ingress ------------------------------------------------------------

    def feed_audio(self, frame: AudioFrame) -> None:
        self._frames.append(frame)
        if self._builder is not None:
            self._builder.push_audio(frame)

    def feed(self, t, xyz) -> tuple[list[HistoryRecord], list[AlertRecord]]:
        t = np.asarray(t, dtype=float)
        xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
        if len(t) == 0:
            return [], []
        if self._last_t is not None and t[0] <= self._last_t:
            raise StreamError(
                f"device {self.device_id}: sample at {t[0]} not after {self._last_t}"
            )
        if self._t0 is None:
            self._t0 = float(t[0])
            self._next_tick = self._t0 + self.cfg.tick_s
            self._next_auth = self._t0 + self.cfg.auth_window_s
            self._next_vote = self._t0 + self.cfg.auth.vote_period_s
            self._last_active_t = self._t0
        self._last_t = float(t[-1])

        fxyz = np.stack(
            [self._axis_filters[a].process(xyz[:, a]) for a in range(3)], axis=1
        )
        fmag = self._mag_filter.process(magnitude_series(xyz))
        for ti, mi in zip(t, fmag):
            self._scanner.push(float(ti), float(mi))
        self._collect_points()

        self._t.extend(float(v) for v in t)
        self._xyz.extend((float(r[0]), float(r[1]), float(r[2])) for r in xyz)
        self._fxyz.extend((float(r[0]), float(r[1]), float(r[2])) for r in fxyz)
        if self._builder is not None:
            self._builder.push(t, xyz, fmag)

        return self._drain(now=self._last_t)

    def finish(self) -> tuple[list[HistoryRecord], list[AlertRecord]]:
        """Process every unit the received samples still cover; idempotent."""
        if self._finished or self._last_t is None:
            return [], []
        self._finished = True
        return self._drain(now=self._last_t + self._dt, final=True)

    # -- unified time-ordered unit loop --------------------------------------

    def _drain(self, now: float, final: bool = False) -> tuple[list[HistoryRecord], list[AlertRecord]]:
        h_mark = len(self.history)
        a_mark = len(self.alerts)
        eps = 1e-9
        while True:
            candidates: list[tuple[float, int, str]] = []
            if self._builder is not None and self._builder.next_end is not None:
                b = self._builder.next_end
                ready = (self._last_t >= b) if not final else self._builder.covers_next()
                if ready:
                    candidates.append((b, 0, "obs"))
            if self._auth_on and self._next_auth is not None and self._next_auth <= now + eps:
                candidates.append((self._next_auth, 1, "auth"))
            if self._auth_on and self._next_vote is not None and self._next_vote <= now + eps:
                candidates.append((self._next_vote, 2, "vote"))
            if self._next_tick is not None and self._next_tick <= now + eps:
                candidates.append((self._next_tick, 3, "tick"))
            if not candidates:
                break
            _, _, kind = min(candidates)
            if kind == "obs":
                self._process_obs_cell()
            elif kind == "auth":
                self._process_auth_window()
            elif kind == "vote":
                self._process_vote()
            else:
                self._process_tick()
        return self.history[h_mark:], self.alerts[a_mark:]

    def _collect_points(self) -> None:
        for p in self._scanner.pop_points():
            self._level_points.append(p)
            self._recent_points.append(p)
            if p.level >= self.cfg.idle_level_g:
                self._last_active_t = p.t

    def _alert(self, t: float, kind: str, payload: dict) -> AlertRecord:
        self._alert_seq += 1
        rec = AlertRecord(
            device_id=self.device_id,
            t=t,
            kind=kind,
            alert_id=f"{self.device_id}-{self._alert_seq}",
            payload=payload,
        )
        self.alerts.append(rec)
        return rec

    def _process_obs_cell(self) -> None:
        obs = self._builder.emit_next()
        alarm = self._fsm.step(obs)
        if alarm is not None:
            self._alarm_times.append(alarm.t_alarm)
            self._alert(
                alarm.t_alarm,
                ALERT_RISKY_EVENT,
                {
                    "t_freefall": alarm.t_freefall,
                    "t_impact": alarm.t_impact,
                    "t_alarm": alarm.t_alarm,
                    "shock_score": alarm.shock_score,
                },
            )
            if self._auth_on:
                self._update_security(alarm.t_alarm)

    def _window(self, t_start: float, t_end: float, filtered: bool) -> Window | None:
        t = np.array(self._t)
        sel = (t >= t_start - 1e-9) & (t < t_end - 1e-9)
        if int(sel.sum()) < 2:
            return None
        rows = self._fxyz if filtered else self._xyz
        xyz = np.array(rows).reshape(-1, 3)[sel]
        return Window(t_start, t_end, t[sel], xyz)

    def _process_auth_window(self) -> None:
        t_end = self._next_auth
        self._next_auth += self.cfg.auth_window_s
        w = self._window(t_end - self.cfg.auth_window_s, t_end, filtered=False)
        if w is None:
            return
        mode = self.models.auth_feature_mode
        samples = audio_slice(self._frames, t_end - self.cfg.auth_window_s, t_end)
        if len(samples) == 0:
            samples = np.zeros(2)
        audio_fv = audio_auth_features(AudioFrame(t_end - self.cfg.auth_window_s, 8000.0, samples))
        motion_fv = motion_auth_features(w)
        row = combine_features(motion_fv, audio_fv, mode)
        self._decisions.append(identify_window(t_end, row, self.models.identifier))
        self._trim_buffers()

    def _process_vote(self) -> None:
        t_end = self._next_vote
        self._next_vote += self.cfg.auth.vote_period_s
        period = [
            d for d in self._decisions if t_end - self.cfg.auth.vote_period_s < d.t <= t_end
        ]
        if period:
            self._voted.append(vote_identify(period))
        self._update_security(t_end)

    def _update_security(self, now: float) -> None:
        new = security_level(self._voted, self._alarm_times, now, self.cfg.auth)
        old = self._security
        self._security = new
        if new == SecurityLevel.LOCKED and old != SecurityLevel.LOCKED:
            last_user = self._voted[-1].user_id if self._voted else None
            self._alert(now, ALERT_AUTH_LOCKED, {"last_voted_user": last_user})

    def _process_tick(self) -> None:
        t_end = self._next_tick
        self._next_tick += self.cfg.tick_s
        points, self._level_points = self._level_points, []
        level = float(np.mean([p.level for p in points])) if points else 0.0
        self._kcal += self.cfg.calorie_kcal_per_g_s * level * self.cfg.tick_s

        activity_class = None
        if self._classify_on:
            activity_class = self._classify_window(t_end - self.cfg.tick_s, t_end)

        auth_user = auth_score = None
        security = None
        if self._auth_on:
            security = self._security.value
            if self._voted:
                auth_user = self._voted[-1].user_id
                auth_score = self._voted[-1].score

        if self.privacy == PRIVACY_COARSE:
            rec = HistoryRecord(self.device_id, t_end, level, kcal_indicative=self._kcal)
        else:
            rec = HistoryRecord(
                self.device_id,
                t_end,
                level,
                activity_class=activity_class,
                auth_user=auth_user,
                auth_score=auth_score,
                security=security,
                kcal_indicative=self._kcal,
            )
        self.history.append(rec)
        self._tick_levels.append((t_end, level))
        self._check_level_alerts(t_end, activity_class)
        self._trim_buffers()

    def _classify_window(self, t_start: float, t_end: float) -> str | None:
        sub = []
        s = t_start
        while s + self.cfg.auth_window_s <= t_end + 1e-9:
            w = self._window(s, s + self.cfg.auth_window_s, filtered=True)
            if w is not None:
                sub.append(activity_features(w))
            s += self.cfg.auth_window_s
        if not sub:
            return None
        feature = instance_features(sub)
        predicted, _ = classify_activity(feature, self.models.classifier)
        return predicted.value

    def _check_level_alerts(self, t_end: float, activity_class: str | None) -> None:
        cfg = self.cfg
        cut = t_end - cfg.high_activity_window_s
        self._recent_points = [p for p in self._recent_points if p.t >= cut]
        if t_end - self._t0 >= cfg.high_activity_window_s and self._recent_points:
            mean_level = float(np.mean([p.level for p in self._recent_points]))
            if mean_level > cfg.high_activity_level_g:
                if self._high_armed:
                    self._high_armed = False
                    self._alert(
                        t_end,
                        ALERT_HIGH_ACTIVITY,
                        {"mean_level": mean_level, "window_s": cfg.high_activity_window_s},
                    )
            else:
                self._high_armed = True

        cut = t_end - cfg.low_activity_window_s
        self._tick_levels = [(t, l) for t, l in self._tick_levels if t >= cut]
        if t_end - self._t0 >= cfg.low_activity_window_s and self._tick_levels:
            if all(l < cfg.low_activity_level_g for _, l in self._tick_levels):
                if self._low_armed:
                    self._low_armed = False
                    self._alert(
                        t_end,
                        ALERT_LOW_ACTIVITY,
                        {"window_s": cfg.low_activity_window_s},
                    )
            else:
                self._low_armed = True

        if t_end - self._last_active_t >= cfg.idle_timeout_s:
            if self._idle_armed:
                self._idle_armed = False
                self._alert(
                    t_end,
                    ALERT_IDLE_TIMEOUT,
                    {"idle_since": self._last_active_t, "timeout_s": cfg.idle_timeout_s},
                )
        else:
            self._idle_armed = True

    def _trim_buffers(self) -> None:
        if self._last_t is None:
            return
        keep = max(self.cfg.tick_s, self.cfg.high_activity_window_s) + 5.0
        cut_t = self._last_t - keep
        cut = 0
        while cut < len(self._t) and self._t[cut] < cut_t:
            cut += 1
        if cut:
            del self._t[:cut], self._xyz[:cut], self._fxyz[:cut]
        self._frames = [f for f in self._frames if f.t_end > cut_t]
        vote_keep = self.cfg.auth.vote_period_s * 2
        self._decisions = [d for d in self._decisions if d.t > self._last_t - vote_keep]
        if len(self._voted) > 16:
            self._voted = self._voted[-16:]
        if len(self._alarm_times) > 64:
            self._alarm_times = self._alarm_times[-64:]


def run_offline(
    stream: AccelStream,
    frames: list[AudioFrame] | None,
    models: PipelineModels,
    cfg: PipelineConfig | None = None,
    privacy: str = PRIVACY_FULL,
    fsm_mode: str = MODE_THREE_STEP,
) -> DevicePipeline:
    """Batch-process one trace through the same pipeline the live service runs."""
    stream = stream.to_g()
    pipeline = DevicePipeline(
        stream.device_id, stream.rate_hz, models, cfg, privacy, fsm_mode=fsm_mode
    )
    for frame in frames or []:
        pipeline.feed_audio(frame)
    if len(stream):
        pipeline.feed(stream.t, stream.xyz)
    pipeline.finish()
    return pipeline


def calorie_estimate(levels: list[tuple[float, float]], kcal_per_g_s: float = 0.05) -> float:
    """Indicative-only linear mapping kcal = c * sum(level * dt).

    ``levels`` are (t, level) points in time order; dt is the spacing to the
    previous point (first point contributes nothing).
    """
    total = 0.0
    for (t_prev, _), (t_cur, level) in zip(levels, levels[1:]):
        total += level * (t_cur - t_prev)
    return kcal_per_g_s * total


# --------------------------------------------------------------------------
# Service: sessions, persistence, queries
# --------------------------------------------------------------------------


@dataclass
class DeviceConfigEntry:
    # token None = query-only entry (e.g. restored from logs at startup
    # without device config); ingest is refused until a token is configured
    token: str | None = ""
    privacy: str = PRIVACY_FULL
    owner: str = ""


def _validate_record(rec: dict) -> None:
    """Structural check before any batch record is applied, so a malformed
    record rejects the whole request and leaves the session untouched."""
    if not isinstance(rec, dict):
        raise StreamError(f"record is not an object: {rec!r}")
    if rec.get("end"):
        return
    try:
        if "samples" in rec:
            float(rec["t_start"])
            float(rec["rate_hz"])
            [float(v) for v in rec["samples"]]
        elif "rate_hz" in rec and "t" not in rec:
            float(rec["rate_hz"])
        else:
            float(rec["t"])
            float(rec["ax"])
            float(rec["ay"])
            float(rec["az"])
    except (KeyError, TypeError, ValueError) as exc:
        raise StreamError(f"malformed record: {rec!r}") from exc


class LogWriter:
    """Append-only canonical-JSON log file."""

    def __init__(self, path: Path):
        self.path = path
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.touch()

    def append(self, record: dict) -> None:
        with self.path.open("a") as fh:
            fh.write(canonical_json(record) + "\n")


class DeviceSession:
    def __init__(self, device_id: str, entry: DeviceConfigEntry, data_dir: Path):
        self.device_id = device_id
        self.entry = entry
        self.lock = threading.RLock()
        self.pipeline: DevicePipeline | None = None
        self.rate_hz: float | None = None
        self.unit: str = UNIT_G
        self.last_seq: int = -1
        self.last_seen_t: float | None = None
        self.history: list[dict] = []
        self.alerts: list[AlertRecord] = []
        self.history_log = LogWriter(data_dir / device_id / "history.jsonl")
        self.alert_log = LogWriter(data_dir / device_id / "alerts.jsonl")
        self.finished = False


class MonitorService:
    """Thread-safe ingest/query hub over per-device pipelines and logs."""

    def __init__(
        self,
        data_dir,
        devices: dict[str, DeviceConfigEntry] | None = None,
        models: PipelineModels | None = None,
        cfg: PipelineConfig | None = None,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg or PipelineConfig()
        self.models = models or PipelineModels()
        self._devices = devices or {}
        self._sessions: dict[str, DeviceSession] = {}
        self._lock = threading.RLock()
        self._subscribers: list[queue.Queue] = []
        self._load_existing_logs()

    # -- device/session management -------------------------------------------

    def register_device(self, device_id: str, entry: DeviceConfigEntry) -> None:
        with self._lock:
            self._devices[device_id] = entry

    def _session(self, device_id: str) -> DeviceSession:
        with self._lock:
            if device_id not in self._devices:
                raise DataError(f"unknown device {device_id!r}")
            if device_id not in self._sessions:
                self._sessions[device_id] = DeviceSession(
                    device_id, self._devices[device_id], self.data_dir
                )
            return self._sessions[device_id]

    def _load_existing_logs(self) -> None:
        if not self.data_dir.exists():
            return
        for sub in sorted(self.data_dir.iterdir()):
            if not sub.is_dir():
                continue
            device_id = sub.name
            self._devices.setdefault(device_id, DeviceConfigEntry(token=None))
            session = DeviceSession(device_id, self._devices[device_id], self.data_dir)
            hpath = sub / "history.jsonl"
            if hpath.exists():
                with hpath.open() as fh:
                    session.history = [json.loads(line) for line in fh if line.strip()]
            apath = sub / "alerts.jsonl"
            if apath.exists():
                acks: dict[str, str] = {}
                records = []
                with apath.open() as fh:
                    for line in fh:
                        if not line.strip():
                            continue
                        doc = json.loads(line)
                        if doc.get("ack_of"):
                            acks[doc["ack_of"]] = doc.get("note", "")
                        else:
                            records.append(doc)
                for doc in records:
                    rec = AlertRecord(
                        device_id=doc["device_id"],
                        t=doc["t"],
                        kind=doc["kind"],
                        alert_id=doc["alert_id"],
                        payload=doc.get("payload", {}),
                    )
                    if rec.alert_id in acks:
                        rec.acknowledged = True
                        rec.ack_note = acks[rec.alert_id]
                    session.alerts.append(rec)
            if session.history:
                session.last_seen_t = session.history[-1]["t"]
            with self._lock:
                self._sessions[device_id] = session

    # -- ingest ---------------------------------------------------------------

    def authenticate(self, device_id: str, token: str) -> None:
        with self._lock:
            entry = self._devices.get(device_id)
        if entry is None:
            raise DataError(f"unknown device {device_id!r}")
        if entry.token is None:
            raise DataError(f"device {device_id!r} is query-only (no ingest token configured)")
        if entry.token != token:
            raise DataError(f"bad token for device {device_id!r}")

    def ingest_records(self, device_id: str, records: list[dict]) -> dict:
        """Apply a time/seq-ordered batch for one device.

        Records may be a header, samples, audio frames, or an end marker;
        duplicates (seq <= last seen) are dropped idempotently.  A seq jump
        beyond the configured limit logs a gap event and resets the pipeline.
        """
        session = self._session(device_id)
        for rec in records:
            _validate_record(rec)
        accepted = 0
        duplicates = 0
        with session.lock:
            records = sorted(records, key=lambda r: r.get("seq", 0))
            for rec in records:
                seq = int(rec.get("seq", 0))
                if seq <= session.last_seq:
                    duplicates += 1
                    continue
                if (
                    session.last_seq >= 0
                    and seq > session.last_seq + self.cfg.seq_gap_limit
                ):
                    self._log_gap(session, seq)
                if rec.get("end"):
                    self._finish_session(session)
                elif "samples" in rec:
                    self._handle_audio(session, rec)
                elif "rate_hz" in rec and "t" not in rec:
                    self._handle_header(session, rec)
                else:
                    self._handle_sample(session, rec)
                session.last_seq = seq
                accepted += 1
        return {"ok": True, "accepted": accepted, "duplicates": duplicates}

    def _handle_header(self, session: DeviceSession, rec: dict) -> None:
        session.rate_hz = float(rec["rate_hz"])
        session.unit = rec.get("unit", UNIT_G)
        if session.pipeline is None:
            session.pipeline = self._new_pipeline(session)

    def _new_pipeline(self, session: DeviceSession) -> DevicePipeline:
        if session.rate_hz is None:
            raise StreamError(f"device {session.device_id}: samples before header")
        cfg = self.cfg
        if session.entry.owner:
            cfg = replace(cfg, auth=replace(cfg.auth, owner=session.entry.owner))
        return DevicePipeline(
            session.device_id,
            session.rate_hz,
            self.models,
            cfg,
            privacy=session.entry.privacy,
        )

    def _handle_sample(self, session: DeviceSession, rec: dict) -> None:
        try:
            t = float(rec["t"])
            row = (float(rec["ax"]), float(rec["ay"]), float(rec["az"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise StreamError(f"malformed sample record: {rec!r}") from exc
        if session.pipeline is None:
            session.pipeline = self._new_pipeline(session)
        if session.unit != UNIT_G:
            row = tuple(v / G0_MPS2 for v in row)
        history, alerts = session.pipeline.feed([t], [row])
        session.last_seen_t = t
        self._commit(session, history, alerts)

    def _handle_audio(self, session: DeviceSession, rec: dict) -> None:
        frame = AudioFrame(
            t_start=float(rec["t_start"]),
            rate_hz=float(rec["rate_hz"]),
            samples=np.array(rec["samples"], dtype=float),
        )
        if session.pipeline is None:
            session.pipeline = self._new_pipeline(session)
        session.pipeline.feed_audio(frame)

    def _finish_session(self, session: DeviceSession) -> None:
        if session.pipeline is None or session.finished:
            return
        session.finished = True
        history, alerts = session.pipeline.finish()
        self._commit(session, history, alerts)

    def _log_gap(self, session: DeviceSession, seq: int) -> None:
        rec = AlertRecord(
            device_id=session.device_id,
            t=session.last_seen_t or 0.0,
            kind=ALERT_STREAM_GAP,
            alert_id=f"{session.device_id}-gap-{seq}",
            payload={"last_seq": session.last_seq, "next_seq": seq},
        )
        session.alerts.append(rec)
        session.alert_log.append(rec.to_record())
        self._publish(rec)
        session.pipeline = self._new_pipeline(session)
        session.finished = False

    def _commit(self, session: DeviceSession, history: list[HistoryRecord], alerts: list[AlertRecord]) -> None:
        for rec in history:
            doc = rec.to_record()
            session.history.append(doc)
            session.history_log.append(doc)
        for alert in alerts:
            session.alerts.append(alert)
            session.alert_log.append(alert.to_record())
            self._publish(alert)

    # -- alert fan-out ----------------------------------------------------------

    def subscribe_alerts(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe_alerts(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def _publish(self, alert: AlertRecord) -> None:
        with self._lock:
            subscribers = list(self._subscribers)
        for q in subscribers:
            q.put(alert.to_view())

    # -- queries -----------------------------------------------------------------

    def device_ids(self) -> list[str]:
        with self._lock:
            return sorted(set(self._devices) | set(self._sessions))

    def status(self, device_id: str) -> dict:
        with self._lock:
            if device_id not in self._devices and device_id not in self._sessions:
                raise InputError(f"unknown device {device_id!r}")
        session = self._session(device_id)
        with session.lock:
            last_history = session.history[-1] if session.history else None
            unacked = sum(1 for a in session.alerts if not a.acknowledged)
            coarse = session.entry.privacy == PRIVACY_COARSE
            status = {
                "device_id": device_id,
                "privacy": session.entry.privacy,
                "last_seen_t": session.last_seen_t,
                "level": last_history["level"] if last_history else None,
                "activity_class": None if coarse else (
                    last_history.get("activity_class") if last_history else None
                ),
                "security": None if coarse else (
                    last_history.get("security") if last_history else None
                ),
                "kcal_indicative": last_history["kcal_indicative"] if last_history else 0.0,
                "unacknowledged_alerts": unacked,
            }
        return status

    def query_history(
        self,
        device_id: str,
        t_start: float | None = None,
        t_end: float | None = None,
        activity_class: str | None = None,
    ) -> list[dict]:
        session = self._session(device_id)
        with session.lock:
            out = []
            for doc in session.history:
                if t_start is not None and doc["t"] < t_start:
                    continue
                if t_end is not None and doc["t"] >= t_end:
                    continue
                if activity_class is not None and doc.get("activity_class") != activity_class:
                    continue
                out.append(dict(doc))
        return out

    def query_alerts(
        self,
        device_id: str | None = None,
        kind: str | None = None,
        since: float | None = None,
        unacked_only: bool = False,
    ) -> list[dict]:
        ids = [device_id] if device_id else self.device_ids()
        out = []
        for did in ids:
            try:
                session = self._session(did)
            except DataError:
                raise InputError(f"unknown device {did!r}")
            with session.lock:
                for alert in session.alerts:
                    if kind is not None and alert.kind != kind:
                        continue
                    if since is not None and alert.t < since:
                        continue
                    if unacked_only and alert.acknowledged:
                        continue
                    out.append(alert.to_view())
        out.sort(key=lambda a: (a["t"], a["alert_id"]))
        return out

    def acknowledge(self, alert_id: str, note: str = "") -> dict:
        device_id = alert_id.rsplit("-", 1)[0]
        if alert_id.count("-") >= 2 and "-gap-" in alert_id:
            device_id = alert_id.split("-gap-")[0]
        session = self._session(device_id)
        with session.lock:
            for alert in session.alerts:
                if alert.alert_id == alert_id:
                    if not alert.acknowledged:
                        alert.acknowledged = True
                        alert.ack_note = note
                        # acknowledgment is itself an appended record; the
                        # original alert line is never rewritten
                        session.alert_log.append({"ack_of": alert_id, "note": note})
                    return alert.to_view()
        raise InputError(f"unknown alert {alert_id!r}")

    # -- config -----------------------------------------------------------------

    def get_config(self) -> dict:
        with self._lock:
            return self.cfg.to_dict()

    def set_config(self, doc: dict) -> dict:
        new_cfg = PipelineConfig.from_dict({**self.cfg.to_dict(), **doc})
        with self._lock:
            self.cfg = new_cfg
        return new_cfg.to_dict()
