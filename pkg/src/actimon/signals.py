"""Raw acceleration signal representation, high-pass preprocessing, and windowing.

Streams are tri-axial accelerometer samples with strictly increasing
timestamps.  All downstream thresholds are expressed in g, so streams
recorded in m/s^2 are converted once at ingest (``AccelStream.to_g``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, InsufficientDataError, ParameterError, StreamError

G0_MPS2 = 9.81  # 1 g in m/s^2

UNIT_G = "g"
UNIT_MPS2 = "mps2"


@dataclass(frozen=True)
class AccelSample:
    """One timestamped tri-axial reading."""

    t: float
    ax: float
    ay: float
    az: float


@dataclass
class AccelStream:
    """An ordered tri-axial acceleration recording from one device.

    ``t`` is shape (n,), ``xyz`` is shape (n, 3); rows are aligned.
    """

    device_id: str
    rate_hz: float
    unit: str
    t: np.ndarray
    xyz: np.ndarray

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float)
        self.xyz = np.asarray(self.xyz, dtype=float)
        if self.rate_hz <= 0:
            raise ParameterError(f"rate_hz must be > 0, got {self.rate_hz}")
        if self.unit not in (UNIT_G, UNIT_MPS2):
            raise ParameterError(f"unknown acceleration unit {self.unit!r}")
        if self.xyz.ndim != 2 or self.xyz.shape[1] != 3 or len(self.t) != len(self.xyz):
            raise StreamError("t and xyz must be aligned (n,) and (n, 3) arrays")
        if not np.all(np.isfinite(self.t)) or not np.all(np.isfinite(self.xyz)):
            raise StreamError("stream contains non-finite values")
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise StreamError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration_s(self) -> float:
        """Nominal covered span: one sample period past the last timestamp."""
        if len(self.t) == 0:
            return 0.0
        return float(self.t[-1] - self.t[0] + 1.0 / self.rate_hz)

    def to_g(self) -> "AccelStream":
        if self.unit == UNIT_G:
            return self
        return AccelStream(self.device_id, self.rate_hz, UNIT_G, self.t, self.xyz / G0_MPS2)

    def rate_warnings(self) -> list[str]:
        """Report (never raise) median inter-sample gaps off by >20% of 1/rate."""
        if len(self.t) < 2:
            return []
        med = float(np.median(np.diff(self.t)))
        nominal = 1.0 / self.rate_hz
        if abs(med - nominal) > 0.2 * nominal:
            return [
                f"device {self.device_id}: median gap {med:.4f}s deviates >20% "
                f"from nominal {nominal:.4f}s"
            ]
        return []

    def samples(self) -> list[AccelSample]:
        return [AccelSample(float(t), *map(float, row)) for t, row in zip(self.t, self.xyz)]


@dataclass
class AudioFrame:
    """A block of mono audio amplitudes starting at ``t_start``."""

    t_start: float
    rate_hz: float
    samples: np.ndarray

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float)
        if self.rate_hz <= 0:
            raise ParameterError(f"audio rate_hz must be > 0, got {self.rate_hz}")
        if not np.all(np.isfinite(self.samples)):
            raise StreamError("audio frame contains non-finite amplitudes")

    @property
    def t_end(self) -> float:
        return self.t_start + len(self.samples) / self.rate_hz


@dataclass
class Window:
    """A contiguous time slice of a parent stream covering [t_start, t_end)."""

    t_start: float
    t_end: float
    t: np.ndarray
    xyz: np.ndarray

    def __post_init__(self) -> None:
        if len(self.t) == 0:
            raise StreamError("window must be non-empty")
        if not self.t_start < self.t_end:
            raise StreamError("window must have t_start < t_end")

    def __len__(self) -> int:
        return len(self.t)


def magnitude(s: AccelSample) -> float:
    """Euclidean norm of one sample; orientation-invariant by construction."""
    return math.sqrt(s.ax * s.ax + s.ay * s.ay + s.az * s.az)


def magnitude_series(xyz: np.ndarray) -> np.ndarray:
    xyz = np.asarray(xyz, dtype=float)
    return np.sqrt(np.sum(xyz * xyz, axis=-1))


def jerk_series(mags) -> np.ndarray:
    """First difference of a magnitude series: out[k] = mags[k+1] - mags[k]."""
    mags = np.asarray(mags, dtype=float)
    if len(mags) < 2:
        raise InsufficientDataError("jerk needs at least 2 samples")
    return np.diff(mags)


class HighPassFilter:
    """Second-order digital high-pass (bilinear-transform Butterworth).

    Default cutoff 0.5 Hz removes gravity and vehicle-scale drift while
    passing gait frequencies (~1-3 Hz).  The internal state is step-matched
    on the first sample so a constant input produces exactly zero output
    from the very first sample (no startup transient for DC; oscillatory
    inputs settle within roughly 2/cutoff seconds).

    One instance per device axis/series; carries per-stream state and is
    not shared across streams.
    """

    def __init__(self, rate_hz: float, cutoff_hz: float = 0.5):
        if not 0 < cutoff_hz < rate_hz / 2:
            raise ParameterError(
                f"cutoff {cutoff_hz} Hz outside (0, Nyquist={rate_hz / 2}) at rate {rate_hz}"
            )
        self.rate_hz = float(rate_hz)
        self.cutoff_hz = float(cutoff_hz)
        k = math.tan(math.pi * cutoff_hz / rate_hz)
        norm = 1.0 / (1.0 + math.sqrt(2.0) * k + k * k)
        self.b0 = norm
        self.b1 = -2.0 * norm
        self.b2 = norm
        self.a1 = 2.0 * (k * k - 1.0) * norm
        self.a2 = (1.0 - math.sqrt(2.0) * k + k * k) * norm
        self._s1 = 0.0
        self._s2 = 0.0
        self._primed = False

    def gain_at(self, f_hz: float) -> float:
        """Steady-state amplitude gain of the filter at ``f_hz``."""
        w = 2.0 * math.pi * f_hz / self.rate_hz
        z = complex(math.cos(w), math.sin(w))
        num = self.b0 + self.b1 / z + self.b2 / z**2
        den = 1.0 + self.a1 / z + self.a2 / z**2
        return abs(num / den)

    def _prime(self, x0: float) -> None:
        # Steady-state (DF2T) state for a constant input x0; valid because
        # b0 + b1 + b2 == 0 for this high-pass.
        self._s1 = -self.b0 * x0
        self._s2 = self.b2 * x0
        self._primed = True

    def process(self, x) -> np.ndarray:
        """Filter a chunk, updating state; chunks concatenate transparently."""
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        if len(x) == 0:
            return out
        if not self._primed:
            self._prime(float(x[0]))
        s1, s2 = self._s1, self._s2
        b0, b1, b2, a1, a2 = self.b0, self.b1, self.b2, self.a1, self.a2
        for i in range(len(x)):
            xi = x[i]
            y = b0 * xi + s1
            s1 = b1 * xi - a1 * y + s2
            s2 = b2 * xi - a2 * y
            out[i] = y
        self._s1, self._s2 = s1, s2
        return out


def high_pass(stream: AccelStream, cutoff_hz: float = 0.5) -> AccelStream:
    """Filter each axis independently with identical coefficients.

    Output preserves length, timestamps, and unit; the gravity/DC component
    is suppressed.
    """
    out = np.empty_like(stream.xyz)
    for axis in range(3):
        filt = HighPassFilter(stream.rate_hz, cutoff_hz)
        out[:, axis] = filt.process(stream.xyz[:, axis])
    return AccelStream(stream.device_id, stream.rate_hz, stream.unit, stream.t.copy(), out)


def make_windows(stream: AccelStream, length_s: float, hop_s: float) -> list[Window]:
    """Fixed-length windows starting at t0, t0+hop, ...; trailing partial dropped.

    A window [start, start+length) is emitted only when it fits inside the
    stream's nominal span (last timestamp plus one sample period).  A stream
    shorter than one window yields an empty list.
    """
    if length_s <= 0 or hop_s <= 0:
        raise ParameterError("window length and hop must be > 0")
    n = len(stream)
    if n == 0:
        return []
    t0 = float(stream.t[0])
    stream_end = t0 + stream.duration_s
    windows: list[Window] = []
    eps = 1e-9
    start = t0
    while start + length_s <= stream_end + eps:
        i = int(np.searchsorted(stream.t, start - eps, side="left"))
        j = int(np.searchsorted(stream.t, start + length_s - eps, side="left"))
        if j > i:
            windows.append(
                Window(start, start + length_s, stream.t[i:j], stream.xyz[i:j])
            )
        start += hop_s
    return windows


# --- trace file format (shared repo-wide) ---------------------------------
#
# Newline-delimited JSON.  First record is the header
#   {"device_id": ..., "rate_hz": ..., "unit": "g"|"mps2"}
# followed by one record per sample
#   {"t": <s>, "ax": <f>, "ay": <f>, "az": <f>}
# Audio side-files hold one frame per line:
#   {"t_start": ..., "rate_hz": 8000, "samples": [...]}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_trace(stream: AccelStream, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(
            canonical_json(
                {"device_id": stream.device_id, "rate_hz": stream.rate_hz, "unit": stream.unit}
            )
            + "\n"
        )
        for t, (ax, ay, az) in zip(stream.t, stream.xyz):
            fh.write(
                canonical_json({"t": float(t), "ax": float(ax), "ay": float(ay), "az": float(az)})
                + "\n"
            )


def read_trace(path) -> AccelStream:
    path = Path(path)
    if not path.exists():
        raise InputError(f"trace file not found: {path}")
    with path.open() as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise InputError(f"trace file {path} is empty")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise InputError(f"bad trace header in {path}: {exc}") from exc
        if "device_id" not in header or "rate_hz" not in header:
            raise InputError(f"trace header in {path} lacks device_id/rate_hz")
        ts, rows = [], []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            ts.append(rec["t"])
            rows.append((rec["ax"], rec["ay"], rec["az"]))
    return AccelStream(
        device_id=str(header["device_id"]),
        rate_hz=float(header["rate_hz"]),
        unit=header.get("unit", UNIT_G),
        t=np.array(ts, dtype=float),
        xyz=np.array(rows, dtype=float).reshape(-1, 3),
    )


def write_audio(frames: list[AudioFrame], path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for fr in frames:
            fh.write(
                canonical_json(
                    {
                        "t_start": float(fr.t_start),
                        "rate_hz": float(fr.rate_hz),
                        "samples": [float(v) for v in fr.samples],
                    }
                )
                + "\n"
            )


def read_audio(path) -> list[AudioFrame]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"audio file not found: {path}")
    frames = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            frames.append(
                AudioFrame(
                    t_start=float(rec["t_start"]),
                    rate_hz=float(rec["rate_hz"]),
                    samples=np.array(rec["samples"], dtype=float),
                )
            )
    return frames


def audio_slice(frames: list[AudioFrame], t_start: float, t_end: float) -> np.ndarray:
    """Concatenate amplitudes from ``frames`` that fall inside [t_start, t_end)."""
    parts = []
    for fr in frames:
        if fr.t_end <= t_start or fr.t_start >= t_end:
            continue
        i = max(0, int(math.ceil((t_start - fr.t_start) * fr.rate_hz - 1e-9)))
        j = min(len(fr.samples), int(math.ceil((t_end - fr.t_start) * fr.rate_hz - 1e-9)))
        if j > i:
            parts.append(fr.samples[i:j])
    if not parts:
        return np.empty(0, dtype=float)
    return np.concatenate(parts)
