"""Risky-event detection: free fall -> shock -> post-impact quiet, in order.

The detector is a per-device state machine fed time-ordered per-window
observations.  Free fall is judged on the raw (unfiltered) norm, which reads
near zero while the device falls; the post-impact quiet check uses the
high-passed norm so gravity does not dominate the average.  An impact-only
baseline mode (alarm on the shock classifier alone) exists for comparison
runs and is expected to raise strictly more false alarms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, SchemaError, StreamError
from .features import FeatureVector, shock_features
from .models import MlpModel, mlp_predict
from .signals import AudioFrame, Window, audio_slice

MODE_THREE_STEP = "three-step"
MODE_IMPACT_ONLY = "impact-only"

SHOCK_LABEL = "shock"
NORMAL_LABEL = "normal"


@dataclass
class EventConfig:
    # Only quiet_duration_s (8 s) is a reference value from the source
    # experiments; the rest are tuned defaults, all config-exposed.
    freefall_threshold_g: float = 0.3
    freefall_min_duration_s: float = 0.25
    impact_window_s: float = 1.0
    quiet_duration_s: float = 8.0
    quiet_threshold_g: float = 0.05
    shock_probability_threshold: float = 0.5

    def __post_init__(self) -> None:
        values = (
            self.freefall_threshold_g,
            self.freefall_min_duration_s,
            self.impact_window_s,
            self.quiet_duration_s,
            self.quiet_threshold_g,
            self.shock_probability_threshold,
        )
        if any(v <= 0 for v in values):
            raise ParameterError("event thresholds must all be positive")
        if self.freefall_threshold_g >= 1.0:
            raise ParameterError("free-fall threshold must be below 1 g")


@dataclass(frozen=True)
class RiskyAlarm:
    device_id: str
    t_freefall: float | None  # None only in impact-only baseline mode
    t_impact: float
    t_alarm: float
    shock_score: float

    def __post_init__(self) -> None:
        if self.t_freefall is not None and not (self.t_freefall < self.t_impact < self.t_alarm):
            raise StreamError("alarm timestamps must satisfy t_freefall < t_impact < t_alarm")
        if self.t_freefall is None and not (self.t_impact <= self.t_alarm):
            raise StreamError("alarm timestamps must satisfy t_impact <= t_alarm")


@dataclass(frozen=True)
class Observation:
    """Per-window evidence handed to the FSM, in stream-time order.

    ``quiet_sum``/``quiet_n`` aggregate the high-passed norm over this
    window's samples so the FSM can average activity after an impact.
    """

    t_start: float
    t_end: float
    free_fall: bool = False
    free_fall_t: float | None = None
    shock: bool = False
    shock_score: float = 0.0
    shock_t: float | None = None
    quiet_sum: float = 0.0
    quiet_n: int = 0


def free_fall_run(t, mags, cfg: EventConfig) -> tuple[float, float] | None:
    """Longest contiguous below-threshold stretch lasting >= the minimum.

    Returns (t_start, t_end) of the longest qualifying run, or None.
    """
    t = np.asarray(t, dtype=float)
    mags = np.asarray(mags, dtype=float)
    below = mags < cfg.freefall_threshold_g
    best: tuple[float, float] | None = None
    run_start = None
    for i, flag in enumerate(below):
        if flag and run_start is None:
            run_start = i
        if (not flag or i == len(below) - 1) and run_start is not None:
            end = i if flag else i - 1
            dur = t[end] - t[run_start]
            if dur >= cfg.freefall_min_duration_s:
                if best is None or dur > best[1] - best[0]:
                    best = (float(t[run_start]), float(t[end]))
            run_start = None
    return best


def detect_free_fall(t, mags, cfg: EventConfig) -> bool:
    """True iff the raw norm stays below threshold for the minimum duration."""
    return free_fall_run(t, mags, cfg) is not None


def detect_shock(x: FeatureVector, m: MlpModel, cfg: EventConfig | None = None) -> tuple[bool, float]:
    """Shock-class probability strictly above the threshold (0.5 by default)."""
    cfg = cfg or EventConfig()
    if x.schema_id != "shock":
        raise SchemaError(f"shock detection expects 'shock' features, got {x.schema_id!r}")
    probs = mlp_predict(m, x)
    try:
        score = float(probs[m.class_labels.index(SHOCK_LABEL)])
    except ValueError as exc:
        raise SchemaError("shock model lacks a 'shock' class") from exc
    return score > cfg.shock_probability_threshold, score


def detect_quiet(t, filtered_mags, cfg: EventConfig) -> bool | None:
    """Mean high-passed norm over the quiet interval below threshold.

    Returns None while the segment is still shorter than the quiet duration
    (not yet decidable; the state machine keeps waiting).
    """
    t = np.asarray(t, dtype=float)
    filtered_mags = np.asarray(filtered_mags, dtype=float)
    if len(t) == 0 or t[-1] - t[0] < cfg.quiet_duration_s:
        return None
    cut = t[0] + cfg.quiet_duration_s
    sel = t <= cut
    return bool(np.mean(np.abs(filtered_mags[sel])) < cfg.quiet_threshold_g)


class ObservationBuilder:
    """Turns a raw stream (plus its high-passed norm and audio) into the
    fixed-cadence observations the FSM consumes.

    Cells are ``hop_s`` wide on a grid anchored at the first sample; a cell
    is emitted once a sample at or past its end arrives (or on finish()).
    Free fall and shock are judged on a trailing ``analysis_s`` window so a
    short event straddling a cell boundary is still seen whole; the FSM
    deduplicates repeats.  Used identically by batch and live processing so
    the two stay byte-for-byte comparable.
    """

    def __init__(
        self,
        cfg: EventConfig,
        shock_model: MlpModel | None = None,
        hop_s: float = 0.5,
        analysis_s: float = 1.0,
        audio_rate_hz: float = 8000.0,
    ):
        self.cfg = cfg
        self.shock_model = shock_model
        self.hop_s = hop_s
        self.analysis_s = analysis_s
        self.audio_rate_hz = audio_rate_hz
        self._t: list[float] = []
        self._xyz: list[tuple[float, float, float]] = []
        self._filt_mag: list[float] = []
        self._frames: list[AudioFrame] = []
        self._next_end: float | None = None

    def push_audio(self, frame: AudioFrame) -> None:
        self._frames.append(frame)

    def push(self, t, xyz, filt_mags) -> None:
        """Buffer a chunk; cells are emitted by the caller via emit_next()."""
        xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
        self._t.extend(float(v) for v in t)
        self._xyz.extend((float(r[0]), float(r[1]), float(r[2])) for r in xyz)
        self._filt_mag.extend(float(v) for v in filt_mags)
        if self._next_end is None and self._t:
            self._next_end = self._t[0] + self.hop_s

    @property
    def next_end(self) -> float | None:
        return self._next_end

    def covers_next(self) -> bool:
        """True if buffered samples reach into the next cell (end-of-stream rule)."""
        if self._next_end is None:
            return False
        lo = self._next_end - self.hop_s - 1e-9
        hi = self._next_end - 1e-9
        return any(lo <= ti < hi for ti in self._t)

    def emit_next(self) -> Observation:
        """Emit the cell ending at next_end; caller checks readiness first."""
        obs = self._emit_cell(self._next_end)
        self._next_end += self.hop_s
        return obs

    def _emit_cell(self, cell_end: float) -> Observation:
        cell_start = cell_end - self.hop_s
        win_start = cell_end - self.analysis_s
        t = np.array(self._t)
        xyz = np.array(self._xyz).reshape(-1, 3)
        filt = np.array(self._filt_mag)
        raw = np.sqrt(np.sum(xyz * xyz, axis=1))
        in_win = (t >= win_start - 1e-9) & (t < cell_end - 1e-9)
        in_cell = (t >= cell_start - 1e-9) & (t < cell_end - 1e-9)

        free_fall = False
        free_fall_t = None
        run = free_fall_run(t[in_win], raw[in_win], self.cfg)
        if run is not None:
            free_fall = True
            free_fall_t = run[0]

        shock = False
        shock_score = 0.0
        shock_t = None
        if self.shock_model is not None and int(in_win.sum()) >= 2:
            wt = t[in_win]
            window = Window(win_start, cell_end, wt, xyz[in_win])
            samples = audio_slice(self._frames, win_start, cell_end)
            if len(samples) == 0:
                # no audio on this stream: substitute nominal silence
                samples = np.zeros(max(2, int(self.analysis_s * self.audio_rate_hz)))
            frame = AudioFrame(win_start, self.audio_rate_hz, samples)
            fv = shock_features(window, frame)
            shock, shock_score = detect_shock(fv, self.shock_model, self.cfg)
            if shock:
                shock_t = float(wt[int(np.argmax(raw[in_win]))])

        obs = Observation(
            t_start=cell_start,
            t_end=cell_end,
            free_fall=free_fall,
            free_fall_t=free_fall_t,
            shock=shock,
            shock_score=shock_score,
            shock_t=shock_t,
            quiet_sum=float(np.abs(filt[in_cell]).sum()),
            quiet_n=int(in_cell.sum()),
        )
        self._trim(win_start)
        return obs

    def _trim(self, keep_from: float) -> None:
        cut = 0
        limit = keep_from - self.hop_s
        while cut < len(self._t) and self._t[cut] < limit:
            cut += 1
        if cut:
            del self._t[:cut], self._xyz[:cut], self._filt_mag[:cut]
        t_keep = keep_from - 2.0
        self._frames = [f for f in self._frames if f.t_end > t_keep]


STATE_IDLE = "Idle"
STATE_FREEFALL_SEEN = "FreeFallSeen"
STATE_IMPACT_SEEN = "ImpactSeen"


@dataclass
class RiskyEventFsm:
    device_id: str
    cfg: EventConfig = field(default_factory=EventConfig)
    mode: str = MODE_THREE_STEP

    state: str = STATE_IDLE
    t_freefall: float | None = None
    t_impact: float | None = None
    shock_score: float = 0.0
    _quiet_sum: float = 0.0
    _quiet_n: int = 0
    _quiet_start: float | None = None
    _impact_armed: bool = True  # impact-only mode: re-arm after a quiet window
    _last_t: float = float("-inf")

    def __post_init__(self) -> None:
        if self.mode not in (MODE_THREE_STEP, MODE_IMPACT_ONLY):
            raise ParameterError(f"unknown FSM mode {self.mode!r}")

    def _reset(self) -> None:
        self.state = STATE_IDLE
        self.t_freefall = None
        self.t_impact = None
        self.shock_score = 0.0
        self._quiet_sum = 0.0
        self._quiet_n = 0
        self._quiet_start = None

    def step(self, obs: Observation) -> RiskyAlarm | None:
        """Advance on one observation; returns an alarm at most once per episode.

        Within a single observation free fall is considered before shock
        (their timestamps preserve the physical order), so a fall and its
        impact reported by the same window still transition correctly.
        """
        if obs.t_start < self._last_t - 1e-9:
            raise StreamError(
                f"observation at {obs.t_start} arrived after {self._last_t} (out of order)"
            )
        self._last_t = obs.t_end

        if self.mode == MODE_IMPACT_ONLY:
            if obs.shock and self._impact_armed:
                self._impact_armed = False
                t_impact = obs.shock_t if obs.shock_t is not None else obs.t_start
                return RiskyAlarm(self.device_id, None, t_impact, obs.t_end, obs.shock_score)
            if not obs.shock:
                self._impact_armed = True
            return None

        ff_t = obs.free_fall_t if obs.free_fall_t is not None else obs.t_start
        shock_t = obs.shock_t if obs.shock_t is not None else obs.t_start

        if obs.free_fall:
            if self.state == STATE_IDLE:
                self.state = STATE_FREEFALL_SEEN
                self.t_freefall = ff_t
            elif self.state == STATE_FREEFALL_SEEN:
                # a continuing/new fall refreshes the arming time
                self.t_freefall = max(self.t_freefall, ff_t)
            elif self.state == STATE_IMPACT_SEEN and ff_t > self.t_impact:
                # falling again mid-wait: restart with the new episode
                self._reset()
                self.state = STATE_FREEFALL_SEEN
                self.t_freefall = ff_t
                return None

        if self.state == STATE_FREEFALL_SEEN:
            if obs.shock and self.t_freefall < shock_t <= self.t_freefall + self.cfg.impact_window_s:
                self.state = STATE_IMPACT_SEEN
                self.t_impact = shock_t
                self.shock_score = obs.shock_score
                self._quiet_sum = 0.0
                self._quiet_n = 0
                self._quiet_start = None
            elif obs.t_end > self.t_freefall + self.cfg.impact_window_s:
                self._reset()
            return None

        if self.state == STATE_IMPACT_SEEN:
            # accumulate post-impact activity evidence from whole windows only
            if obs.quiet_n > 0 and obs.t_start >= self.t_impact - 1e-9:
                if self._quiet_start is None:
                    self._quiet_start = obs.t_start
                self._quiet_sum += obs.quiet_sum
                self._quiet_n += obs.quiet_n
                if obs.t_end - self._quiet_start >= self.cfg.quiet_duration_s:
                    mean_level = self._quiet_sum / self._quiet_n
                    alarm = None
                    if mean_level < self.cfg.quiet_threshold_g:
                        alarm = RiskyAlarm(
                            self.device_id,
                            self.t_freefall,
                            self.t_impact,
                            obs.t_end,
                            self.shock_score,
                        )
                    self._reset()
                    return alarm
        return None
