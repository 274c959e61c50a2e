"""Parametric ground-truth generators: activity traces, fall/impact episodes,
and per-user gait+audio sessions.

Every generator is a pure function of its spec and seed, so generated
corpora double as oracles: the generator parameters (amplitudes, event
times, user identities) are the reference answers the pipeline is tested
against.  Quantitative results on these corpora are properties of the
pipeline on synthetic data, not reproductions of any human-subject study.

File layout (see gen_corpus): one trace file per entry in the shared trace
format, audio side-files where the scenario has sound, and a manifest.json
carrying labels, splits, and ground-truth event timestamps.  Audio samples
are written rounded to 5 decimals to keep side-files manageable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .activity import CLASS_ORDER, ActivityClass
from .errors import ParameterError
from .signals import AccelStream, AudioFrame, canonical_json, write_audio, write_trace

G_STD = 9.81

AUDIO_RATE_HZ = 8000.0
ACTIVITY_RATE_HZ = 5.0
EVENT_RATE_HZ = 50.0
AUTH_RATE_HZ = 50.0


@dataclass
class ActivityGenSpec:
    activity: ActivityClass
    freq_hz: float
    amplitude_g: float
    noise_std_g: float
    duration_s: float = 10.0
    rate_hz: float = ACTIVITY_RATE_HZ
    seed: int = 0

    def __post_init__(self) -> None:
        if self.freq_hz < 0 or self.amplitude_g < 0 or self.noise_std_g < 0:
            raise ParameterError("activity spec parameters must be non-negative")
        if self.duration_s <= 0 or self.rate_hz <= 0:
            raise ParameterError("duration and rate must be positive")


# Default class specs; oscillation amplitudes must order strictly
# Running > Walking > Resting > NoActivity (checked by validate_class_specs).
DEFAULT_CLASS_SPECS: dict[ActivityClass, dict] = {
    ActivityClass.WALKING: {"freq_hz": 2.0, "amplitude_g": 0.3, "noise_std_g": 0.008},
    ActivityClass.RUNNING: {"freq_hz": 3.0, "amplitude_g": 0.8, "noise_std_g": 0.015},
    ActivityClass.RESTING: {"freq_hz": 0.5, "amplitude_g": 0.05, "noise_std_g": 0.004},
    ActivityClass.NO_ACTIVITY: {"freq_hz": 0.0, "amplitude_g": 0.0, "noise_std_g": 0.005},
}


def validate_class_specs(specs: dict[ActivityClass, dict]) -> None:
    amps = [specs[c]["amplitude_g"] for c in (ActivityClass.RUNNING, ActivityClass.WALKING,
                                              ActivityClass.RESTING, ActivityClass.NO_ACTIVITY)]
    if not all(a > b for a, b in zip(amps, amps[1:])):
        raise ParameterError(
            "class amplitudes must order Running > Walking > Resting > NoActivity"
        )


def default_spec(activity: ActivityClass, seed: int = 0, **overrides) -> ActivityGenSpec:
    params = dict(DEFAULT_CLASS_SPECS[activity])
    params.update(overrides)
    return ActivityGenSpec(activity=activity, seed=seed, **params)


def gen_activity_trace(spec: ActivityGenSpec, device_id: str = "synth") -> AccelStream:
    """Gravity baseline plus a class-dependent oscillation plus Gaussian noise.

    The fundamental rides on the gravity axis (z), so the magnitude series
    oscillates with amplitude ~= spec.amplitude_g; the cross axes carry
    smaller phase-shifted content with a second harmonic.  NoActivity is
    gravity plus sensor noise only.
    """
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration_s * spec.rate_hz))
    t = np.arange(n) / spec.rate_hz
    amp, f = spec.amplitude_g, spec.freq_hz
    phase = rng.uniform(0.0, 2.0 * np.pi)
    noise = spec.noise_std_g
    if amp > 0 and f > 0:
        osc = amp * np.sin(2.0 * np.pi * f * t + phase)
        x = 0.35 * amp * np.sin(2.0 * np.pi * f * t + phase + 1.1) + 0.15 * amp * np.sin(
            4.0 * np.pi * f * t + phase + 0.4
        )
        y = 0.25 * amp * np.sin(2.0 * np.pi * f * t + phase + 2.3) + 0.10 * amp * np.sin(
            4.0 * np.pi * f * t + phase + 2.9
        )
    else:
        osc = np.zeros(n)
        x = np.zeros(n)
        y = np.zeros(n)
    xyz = np.stack(
        [
            x + noise * rng.standard_normal(n),
            y + noise * rng.standard_normal(n),
            1.0 + osc + noise * rng.standard_normal(n),
        ],
        axis=1,
    )
    return AccelStream(device_id, spec.rate_hz, "g", t, xyz)


# --------------------------------------------------------------------------
# Audio helpers
# --------------------------------------------------------------------------


def _add_click(audio: np.ndarray, rate: float, t0: float, amp: float,
               decay_s: float = 0.015, tone_hz: float = 1400.0) -> None:
    """Superimpose a decaying tone burst starting at t0 (in-place)."""
    i0 = int(round(t0 * rate))
    n = int(round(decay_s * 3 * rate))
    if i0 >= len(audio) or n <= 0:
        return
    k = np.arange(min(n, len(audio) - i0))
    audio[i0 : i0 + len(k)] += amp * np.exp(-k / (rate * decay_s)) * np.sin(
        2.0 * np.pi * tone_hz * k / rate
    )


def _frames_from_audio(audio: np.ndarray, rate: float, frame_s: float = 1.0) -> list[AudioFrame]:
    frames = []
    step = int(round(frame_s * rate))
    for i in range(0, len(audio), step):
        frames.append(AudioFrame(t_start=i / rate, rate_hz=rate, samples=audio[i : i + step]))
    return frames


def _walk_axes(rng, t: np.ndarray, amp: float, f: float, noise: float):
    phase = rng.uniform(0.0, 2.0 * np.pi)
    z = 1.0 + amp * np.sin(2.0 * np.pi * f * t + phase)
    x = 0.35 * amp * np.sin(2.0 * np.pi * f * t + phase + 1.1)
    y = 0.25 * amp * np.sin(2.0 * np.pi * f * t + phase + 2.3)
    return (
        x + noise * rng.standard_normal(len(t)),
        y + noise * rng.standard_normal(len(t)),
        z + noise * rng.standard_normal(len(t)),
    )


# --------------------------------------------------------------------------
# Fall / event traces
# --------------------------------------------------------------------------

POST_ABANDONED = "abandoned"
POST_PICKED_UP = "picked-up-after"


@dataclass
class FallGenSpec:
    drop_height_m: float = 0.75
    impact_spike_g: float = 3.0
    post_impact: str = POST_ABANDONED
    pickup_after_s: float = 1.0
    audio_click_amplitude: float = 0.8
    carry_s: float = 4.0
    post_s: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.drop_height_m <= 0:
            raise ParameterError("drop height must be positive")
        if self.post_impact not in (POST_ABANDONED, POST_PICKED_UP):
            raise ParameterError(f"unknown post-impact behavior {self.post_impact!r}")

    @property
    def freefall_duration_s(self) -> float:
        return math.sqrt(2.0 * self.drop_height_m / G_STD)


def gen_fall_trace(
    spec: FallGenSpec, rate_hz: float = EVENT_RATE_HZ, device_id: str = "synth"
) -> tuple[AccelStream, list[AudioFrame], dict]:
    """Carry -> free fall -> impact spike -> quiet or pickup, with an audio
    click aligned to the impact.  Returns ground-truth event timestamps.
    """
    rng = np.random.default_rng(spec.seed)
    ff_dur = spec.freefall_duration_s
    t_ff = spec.carry_s
    t_impact = t_ff + ff_dur
    total = spec.carry_s + ff_dur + spec.post_s
    n = int(round(total * rate_hz))
    t = np.arange(n) / rate_hz

    x = np.zeros(n)
    y = np.zeros(n)
    z = np.zeros(n)
    carry = t < t_ff
    cx, cy, cz = _walk_axes(rng, t[carry], amp=0.15, f=1.9, noise=0.008)
    x[carry], y[carry], z[carry] = cx, cy, cz

    falling = (t >= t_ff) & (t < t_impact)
    for axis in (x, y, z):
        axis[falling] = 0.012 * rng.standard_normal(int(falling.sum()))

    after = t >= t_impact
    idx_after = np.where(after)[0]
    ta = t[after] - t_impact
    z[after] = 1.0 + spec.impact_spike_g * np.exp(-ta / 0.03)
    x[after] = 0.2 * spec.impact_spike_g * np.exp(-ta / 0.02) * np.cos(60.0 * ta)
    y[after] = 0.1 * spec.impact_spike_g * np.exp(-ta / 0.02) * np.sin(55.0 * ta)
    x[after] += 0.004 * rng.standard_normal(len(idx_after))
    y[after] += 0.004 * rng.standard_normal(len(idx_after))
    z[after] += 0.004 * rng.standard_normal(len(idx_after))

    if spec.post_impact == POST_PICKED_UP:
        resume = t >= t_impact + spec.pickup_after_s
        rx, ry, rz = _walk_axes(rng, t[resume] - (t_impact + spec.pickup_after_s),
                                amp=0.25, f=2.0, noise=0.01)
        x[resume], y[resume], z[resume] = rx, ry, rz

    audio = 0.004 * rng.standard_normal(int(round(total * AUDIO_RATE_HZ)))
    for k in range(int(spec.carry_s * 1.9)):
        _add_click(audio, AUDIO_RATE_HZ, k / 1.9 + 0.1, 0.05, decay_s=0.008)
    _add_click(audio, AUDIO_RATE_HZ, t_impact, spec.audio_click_amplitude)
    if spec.post_impact == POST_PICKED_UP:
        t_resume = t_impact + spec.pickup_after_s
        k = 0
        while t_resume + k / 2.0 < total:
            _add_click(audio, AUDIO_RATE_HZ, t_resume + k / 2.0, 0.06, decay_s=0.008)
            k += 1

    stream = AccelStream(device_id, rate_hz, "g", t, np.stack([x, y, z], axis=1))
    truth = {
        "t_freefall_start": t_ff,
        "t_freefall_end": t_impact,
        "t_impact": t_impact,
        "freefall_duration_s": ff_dur,
        "post_impact": spec.post_impact,
        "pickup_after_s": spec.pickup_after_s if spec.post_impact == POST_PICKED_UP else None,
    }
    return stream, _frames_from_audio(audio, AUDIO_RATE_HZ), truth


NORMAL_VARIANTS = ("walk", "jog", "stairs", "lift", "slam")


def gen_normal_trace(
    variant: str, seed: int, duration_s: float = 10.0, rate_hz: float = EVENT_RATE_HZ,
    device_id: str = "synth"
) -> tuple[AccelStream, list[AudioFrame]]:
    """Regular-carry scenarios for the event study; 'slam' is a hard put-down
    (impact-like spike and click with no preceding free fall).
    """
    if variant not in NORMAL_VARIANTS:
        raise ParameterError(f"unknown normal-trace variant {variant!r}")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * rate_hz))
    t = np.arange(n) / rate_hz
    audio = 0.004 * rng.standard_normal(int(round(duration_s * AUDIO_RATE_HZ)))

    if variant == "walk":
        f = rng.uniform(1.7, 2.1)
        x, y, z = _walk_axes(rng, t, amp=rng.uniform(0.16, 0.24), f=f, noise=0.01)
        click = 0.06
    elif variant == "jog":
        f = rng.uniform(2.6, 3.0)
        x, y, z = _walk_axes(rng, t, amp=rng.uniform(0.45, 0.6), f=f, noise=0.015)
        click = 0.12
    elif variant == "stairs":
        f = rng.uniform(1.5, 1.8)
        x, y, z = _walk_axes(rng, t, amp=rng.uniform(0.2, 0.3), f=f, noise=0.012)
        bump_period = rng.uniform(1.0, 1.3)
        t_b = 0.4
        while t_b < duration_s:
            sel = (t >= t_b) & (t < t_b + 0.06)
            z[sel] += rng.uniform(0.8, 1.2) * np.sin(np.pi * (t[sel] - t_b) / 0.06)
            _add_click(audio, AUDIO_RATE_HZ, t_b, 0.12, decay_s=0.01)
            t_b += bump_period
        click = 0.06
        f = f  # footfalls at walking cadence below
    elif variant == "lift":
        z = 1.0 + 0.04 * np.sin(2.0 * np.pi * 0.15 * t + rng.uniform(0, 6.28))
        z += 0.003 * rng.standard_normal(n)
        x = 0.003 * rng.standard_normal(n)
        y = 0.003 * rng.standard_normal(n)
        stream = AccelStream(device_id, rate_hz, "g", t, np.stack([x, y, z], axis=1))
        return stream, _frames_from_audio(audio, AUDIO_RATE_HZ)
    else:  # slam
        t_slam = 3.0
        x = np.zeros(n)
        y = np.zeros(n)
        z = np.zeros(n)
        carry = t < t_slam
        cx, cy, cz = _walk_axes(rng, t[carry], amp=0.15, f=1.9, noise=0.01)
        x[carry], y[carry], z[carry] = cx, cy, cz
        after = t >= t_slam
        ta = t[after] - t_slam
        z[after] = 1.0 + 2.5 * np.exp(-ta / 0.03)
        x[after] = 0.15 * 2.5 * np.exp(-ta / 0.02) * np.cos(58.0 * ta)
        y[after] = 0.004 * rng.standard_normal(int(after.sum()))
        z[after] += 0.004 * rng.standard_normal(int(after.sum()))
        x[after] += 0.004 * rng.standard_normal(int(after.sum()))
        _add_click(audio, AUDIO_RATE_HZ, t_slam, 0.6)
        for k in range(int(t_slam * 1.9)):
            _add_click(audio, AUDIO_RATE_HZ, k / 1.9 + 0.1, 0.05, decay_s=0.008)
        stream = AccelStream(device_id, rate_hz, "g", t, np.stack([x, y, z], axis=1))
        return stream, _frames_from_audio(audio, AUDIO_RATE_HZ)

    for k in range(int(duration_s * f)):
        _add_click(audio, AUDIO_RATE_HZ, k / f + 0.05, click, decay_s=0.008)
    stream = AccelStream(device_id, rate_hz, "g", t, np.stack([x, y, z], axis=1))
    return stream, _frames_from_audio(audio, AUDIO_RATE_HZ)


# --------------------------------------------------------------------------
# Gait profiles / identification sessions
# --------------------------------------------------------------------------


@dataclass
class GaitProfile:
    user_id: str
    step_freq_hz: float
    amp_x_g: float
    amp_y_g: float
    amp_z_g: float
    harmonic_ratio: float
    phase_x: float
    phase_y: float
    phase_jitter_std: float = 0.02
    footfall_click: float = 0.5
    noise_floor: float = 0.005

    def __post_init__(self) -> None:
        values = (self.step_freq_hz, self.amp_x_g, self.amp_y_g, self.amp_z_g,
                  self.harmonic_ratio, self.phase_jitter_std, self.footfall_click,
                  self.noise_floor)
        if any(v < 0 for v in values):
            raise ParameterError("gait profile parameters must be non-negative")
        if self.amp_x_g + self.amp_y_g + self.amp_z_g == 0:
            raise ParameterError(f"profile {self.user_id!r} has zero amplitude everywhere")


# parameter columns compared by validate_profiles
_PROFILE_PARAMS = ("step_freq_hz", "amp_x_g", "amp_y_g", "amp_z_g",
                   "harmonic_ratio", "footfall_click", "noise_floor")


def validate_profiles(profiles: list[GaitProfile]) -> None:
    """Distinct users must differ by >=20% in at least 2 parameters."""
    for i, a in enumerate(profiles):
        for b in profiles[i + 1 :]:
            distinct = 0
            for name in _PROFILE_PARAMS:
                va, vb = getattr(a, name), getattr(b, name)
                top = max(abs(va), abs(vb))
                if top > 0 and abs(va - vb) / top >= 0.2 - 1e-12:
                    distinct += 1
            if distinct < 2:
                raise ParameterError(
                    f"profiles {a.user_id!r} and {b.user_id!r} differ in fewer than 2 "
                    f"parameters by >=20%"
                )


def default_profiles() -> list[GaitProfile]:
    # step_freq, amp_z, amp_x, amp_y, harmonic, click, floor
    rows = [
        ("u1", 1.55, 0.18, 0.050, 0.040, 0.12, 0.25, 0.004),
        ("u2", 1.95, 0.26, 0.090, 0.055, 0.18, 0.25, 0.004),
        ("u3", 1.60, 0.35, 0.130, 0.075, 0.25, 0.25, 0.004),
        ("u4", 2.00, 0.44, 0.170, 0.095, 0.32, 0.50, 0.005),
        ("u5", 1.60, 0.52, 0.210, 0.115, 0.10, 0.50, 0.005),
        ("u6", 2.05, 0.31, 0.060, 0.130, 0.15, 0.50, 0.005),
        ("u7", 1.70, 0.22, 0.100, 0.150, 0.22, 0.85, 0.006),
        ("u8", 2.10, 0.40, 0.140, 0.170, 0.28, 0.85, 0.006),
        ("u9", 1.75, 0.48, 0.180, 0.190, 0.36, 0.85, 0.006),
    ]
    profiles = []
    for i, (uid, f, az, ax, ay, harm, click, floor) in enumerate(rows):
        profiles.append(
            GaitProfile(
                user_id=uid,
                step_freq_hz=f,
                amp_x_g=ax,
                amp_y_g=ay,
                amp_z_g=az,
                harmonic_ratio=harm,
                phase_x=(0.7 + 0.61 * i) % (2.0 * math.pi),
                phase_y=(2.1 + 0.37 * i) % (2.0 * math.pi),
                footfall_click=click,
                noise_floor=floor,
            )
        )
    validate_profiles(profiles)
    return profiles


def gen_user_session(
    profile: GaitProfile,
    duration_s: float = 120.0,
    seed: int = 0,
    rate_hz: float = AUTH_RATE_HZ,
    device_id: str | None = None,
    session_jitter: float = 0.05,
) -> tuple[AccelStream, list[AudioFrame]]:
    """One walking session for a user: gait oscillation shaped by the profile
    plus footfall clicks over the ambient floor.  The per-session jitter
    models day-to-day variation (clothing, shoes) and keeps sessions distinct
    while features stay near the profile centroid.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * rate_hz))
    t = np.arange(n) / rate_hz
    amp_scale = 1.0 + session_jitter * rng.standard_normal()
    f = profile.step_freq_hz * (1.0 + 0.02 * rng.standard_normal())
    phase0 = rng.uniform(0.0, 2.0 * np.pi)
    drift = np.cumsum(profile.phase_jitter_std * rng.standard_normal(n)) / math.sqrt(rate_hz)
    theta = 2.0 * np.pi * f * t + phase0 + drift
    harm = profile.harmonic_ratio
    az = profile.amp_z_g * amp_scale
    ax = profile.amp_x_g * amp_scale
    ay = profile.amp_y_g * amp_scale
    noise = 0.012
    x = ax * np.sin(theta + profile.phase_x) + harm * ax * np.sin(2 * theta + 0.5)
    y = ay * np.sin(theta + profile.phase_y) + harm * ay * np.sin(2 * theta + 1.7)
    z = 1.0 + az * np.sin(theta) + harm * az * np.sin(2 * theta + 0.9)
    xyz = np.stack(
        [
            x + noise * rng.standard_normal(n),
            y + noise * rng.standard_normal(n),
            z + noise * rng.standard_normal(n),
        ],
        axis=1,
    )
    stream = AccelStream(device_id or profile.user_id, rate_hz, "g", t, xyz)

    audio = profile.noise_floor * rng.standard_normal(int(round(duration_s * AUDIO_RATE_HZ)))
    click = profile.footfall_click * (1.0 + 0.05 * rng.standard_normal())
    step_period = 1.0 / f
    t_step = 0.08
    while t_step < duration_s:
        _add_click(audio, AUDIO_RATE_HZ, t_step, click * (1.0 + 0.1 * rng.standard_normal()),
                   decay_s=0.01)
        t_step += step_period
    return stream, _frames_from_audio(audio, AUDIO_RATE_HZ)


# --------------------------------------------------------------------------
# Corpus recipes
# --------------------------------------------------------------------------

RECIPE_ACTIVITIES = "activities"
RECIPE_EVENTS = "events"
RECIPE_AUTH = "auth"
RECIPES = (RECIPE_ACTIVITIES, RECIPE_EVENTS, RECIPE_AUTH)

# per-class uniform jitter on amplitude and frequency for corpus instances;
# ranges chosen so walk/run and rest/no-activity stay adjacent (block
# confusions possible) while cross-block gaps remain wide
_ACTIVITY_JITTER = {
    ActivityClass.WALKING: ((0.6, 1.45), (0.8, 1.2)),
    ActivityClass.RUNNING: ((0.55, 1.3), (0.85, 1.15)),
    ActivityClass.RESTING: ((0.5, 1.4), (0.6, 1.6)),
    ActivityClass.NO_ACTIVITY: ((1.0, 1.0), (1.0, 1.0)),
}

ACTIVITY_TRAIN_PER_CLASS = 52
ACTIVITY_TEST_PER_CLASS = 28

EVENT_TRAIN_SHOCKS = 36
EVENT_TRAIN_NORMALS = 98
EVENT_EVAL_FALLS = 36
EVENT_EVAL_PICKUPS = 12
EVENT_EVAL_NORMALS = 98

AUTH_USERS = 9
AUTH_SESSIONS = 3
AUTH_SESSION_S = 120.0


def make_activity_instance_spec(label: ActivityClass, seed, noise_scale: float = 2.0) -> ActivityGenSpec:
    """Corpus instance spec: per-instance amplitude/frequency jitter around
    the class default, with noisier sensors than the clean default spec.
    """
    rng = np.random.default_rng(seed)
    base = DEFAULT_CLASS_SPECS[label]
    (alo, ahi), (flo, fhi) = _ACTIVITY_JITTER[label]
    return ActivityGenSpec(
        activity=label,
        freq_hz=base["freq_hz"] * rng.uniform(flo, fhi),
        amplitude_g=base["amplitude_g"] * rng.uniform(alo, ahi),
        noise_std_g=base["noise_std_g"] * noise_scale,
        seed=int(rng.integers(2**31)),
    )


def _gen_activities(out: Path, seed: int) -> list[dict]:
    entries = []
    validate_class_specs(DEFAULT_CLASS_SPECS)
    per_class = ACTIVITY_TRAIN_PER_CLASS + ACTIVITY_TEST_PER_CLASS
    idx = 0
    for label in CLASS_ORDER:
        for j in range(per_class):
            spec = make_activity_instance_spec(label, [seed, 101, idx])
            stream = gen_activity_trace(spec, device_id=f"act-{idx:04d}")
            fname = f"instance_{idx:04d}.jsonl"
            write_trace(stream, out / fname)
            entries.append(
                {
                    "id": f"act-{idx:04d}",
                    "kind": "activity-instance",
                    "file": fname,
                    "label": label.value,
                    "split": "train" if j < ACTIVITY_TRAIN_PER_CLASS else "test",
                }
            )
            idx += 1
    return entries


def _gen_events(
    out: Path,
    seed: int,
    n_train_shocks: int = EVENT_TRAIN_SHOCKS,
    n_train_normals: int = EVENT_TRAIN_NORMALS,
    n_eval_falls: int = EVENT_EVAL_FALLS,
    n_eval_pickups: int = EVENT_EVAL_PICKUPS,
    n_eval_normals: int = EVENT_EVAL_NORMALS,
) -> list[dict]:
    entries = []
    idx = 0

    def emit(kind, stream, frames, split, truth=None, variant=None):
        nonlocal idx
        fname = f"trace_{idx:04d}.jsonl"
        aname = f"trace_{idx:04d}.audio.jsonl"
        write_trace(stream, out / fname)
        _write_audio_rounded(frames, out / aname)
        entry = {
            "id": stream.device_id,
            "kind": kind,
            "file": fname,
            "audio_file": aname,
            "split": split,
        }
        if truth is not None:
            entry["ground_truth"] = truth
        if variant is not None:
            entry["variant"] = variant
        entries.append(entry)
        idx += 1

    for i in range(n_train_shocks):
        spec = FallGenSpec(seed=_child(seed, 201, i))
        stream, frames, truth = gen_fall_trace(spec, device_id=f"evt-{idx:04d}")
        emit("shock-train", stream, frames, "train", truth)
    train_variants = [v for v in NORMAL_VARIANTS if v != "slam"]
    for i in range(n_train_normals):
        variant = train_variants[i % len(train_variants)]
        stream, frames = gen_normal_trace(variant, _child(seed, 202, i), device_id=f"evt-{idx:04d}")
        emit("normal-train", stream, frames, "train", variant=variant)
    for i in range(n_eval_falls):
        spec = FallGenSpec(seed=_child(seed, 203, i))
        stream, frames, truth = gen_fall_trace(spec, device_id=f"evt-{idx:04d}")
        emit("fall-abandoned", stream, frames, "eval", truth)
    for i in range(n_eval_pickups):
        spec = FallGenSpec(post_impact=POST_PICKED_UP, pickup_after_s=1.0,
                           seed=_child(seed, 204, i))
        stream, frames, truth = gen_fall_trace(spec, device_id=f"evt-{idx:04d}")
        emit("fall-pickup", stream, frames, "eval", truth)
    for i in range(n_eval_normals):
        variant = "slam" if i % 12 == 11 else train_variants[i % len(train_variants)]
        stream, frames = gen_normal_trace(variant, _child(seed, 205, i), device_id=f"evt-{idx:04d}")
        emit("normal-eval", stream, frames, "eval", variant=variant)
    return entries


def _gen_auth(
    out: Path, seed: int, session_s: float = AUTH_SESSION_S, n_users: int = AUTH_USERS
) -> list[dict]:
    entries = []
    profiles = default_profiles()[:n_users]
    for ui, profile in enumerate(profiles):
        for si in range(AUTH_SESSIONS):
            stream, frames = gen_user_session(
                profile,
                duration_s=session_s,
                seed=_child(seed, 301, ui * AUTH_SESSIONS + si),
                device_id=f"{profile.user_id}-s{si}",
            )
            fname = f"{profile.user_id}_s{si}.jsonl"
            aname = f"{profile.user_id}_s{si}.audio.jsonl"
            write_trace(stream, out / fname)
            _write_audio_rounded(frames, out / aname)
            entries.append(
                {
                    "id": f"{profile.user_id}-s{si}",
                    "kind": "auth-session",
                    "file": fname,
                    "audio_file": aname,
                    "user": profile.user_id,
                    "session": si,
                    "split": "train" if si < AUTH_SESSIONS - 1 else "test",
                }
            )
    return entries


def _child(seed: int, salt: int, i: int) -> list[int]:
    return [seed, salt, i]


def _write_audio_rounded(frames: list[AudioFrame], path: Path, decimals: int = 5) -> None:
    rounded = [
        AudioFrame(f.t_start, f.rate_hz, np.round(f.samples, decimals)) for f in frames
    ]
    write_audio(rounded, path)


def gen_corpus(recipe: str, out_dir, seed: int = 0, scale: float = 1.0, **kwargs) -> dict:
    """Generate a labeled corpus under out_dir and return (and write) its
    manifest.  Deterministic: same recipe and seed produce identical files.

    ``scale`` shrinks the default entry counts proportionally (events and
    auth recipes write sizeable full-rate audio side-files; see README for
    default sizes).  Explicit n_*/session_s keyword overrides win over scale.
    """
    if recipe not in RECIPES:
        raise ParameterError(f"unknown recipe {recipe!r}; choose from {RECIPES}")
    if scale <= 0:
        raise ParameterError("scale must be positive")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def scaled(n: int, floor: int = 1) -> int:
        return max(floor, int(round(n * scale)))

    if recipe == RECIPE_ACTIVITIES:
        entries = _gen_activities(out, seed)
    elif recipe == RECIPE_EVENTS:
        defaults = {
            "n_train_shocks": scaled(EVENT_TRAIN_SHOCKS, 2),
            "n_train_normals": scaled(EVENT_TRAIN_NORMALS, 4),
            "n_eval_falls": scaled(EVENT_EVAL_FALLS),
            "n_eval_pickups": scaled(EVENT_EVAL_PICKUPS),
            "n_eval_normals": scaled(EVENT_EVAL_NORMALS, 4),
        }
        defaults.update(kwargs)
        entries = _gen_events(out, seed, **defaults)
    else:
        defaults = {"n_users": scaled(AUTH_USERS, 2)}
        defaults.update(kwargs)
        entries = _gen_auth(out, seed, **defaults)
    manifest = {"recipe": recipe, "seed": seed, "entries": entries}
    (out / "manifest.json").write_text(canonical_json(manifest) + "\n")
    return manifest
