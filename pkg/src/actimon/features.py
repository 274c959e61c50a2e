"""Feature extraction over acceleration windows and audio frames.

Four frozen schemas are registered here; trained models embed the schema
manifest so a model/feature mismatch is detectable at load time.

Conventions (fixed, documented):
- variances are population variances;
- Pearson correlation is defined as 0 when either axis has zero variance;
- the audio DFT feature uses a 256-point transform on the frame after
  block-average downmixing, one-sided spectrum, DC bin excluded;
- activity features expect a high-passed window, identification (auth) and
  shock features expect the unfiltered window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, SchemaError
from .signals import AudioFrame, Window, jerk_series, magnitude_series

SCHEMA_VERSION = 1

# schema id -> ordered per-element labels
SCHEMAS: dict[str, tuple[str, ...]] = {
    "activity": ("mean_abs_accel", "mean_abs_jerk"),
    "motion-auth": (
        "mean_x",
        "mean_y",
        "mean_z",
        "var_x",
        "var_y",
        "var_z",
        "mean_norm",
        "var_norm",
        "corr_xy",
        "corr_xz",
        "corr_yz",
    ),
    "audio-auth": ("audio_mean", "audio_var", "audio_energy", "audio_dft_mag_var"),
    "shock": (
        "mean_norm",
        "var_norm",
        "max_norm",
        "mean_abs_jerk",
        "audio_mean",
        "audio_var",
        "audio_energy",
        "audio_peak",
    ),
}

# features whose value depends on sample order within the window
ORDER_SENSITIVE: dict[str, tuple[str, ...]] = {
    "activity": ("mean_abs_jerk",),
    "motion-auth": (),
    "audio-auth": ("audio_dft_mag_var",),
    "shock": ("mean_abs_jerk",),
}

DFT_POINTS = 256


def schema_manifest(schema_id: str) -> dict:
    if schema_id not in SCHEMAS:
        raise SchemaError(f"unknown feature schema {schema_id!r}")
    labels = SCHEMAS[schema_id]
    return {
        "version": SCHEMA_VERSION,
        "name": schema_id,
        "length": len(labels),
        "labels": list(labels),
        "order_sensitive": list(ORDER_SENSITIVE[schema_id]),
    }


def check_manifest(manifest: dict) -> None:
    """Raise SchemaError unless ``manifest`` matches the registry."""
    current = schema_manifest(manifest.get("name", ""))
    if manifest.get("length") != current["length"] or manifest.get("labels") != current["labels"]:
        raise SchemaError(
            f"feature schema {manifest.get('name')!r} does not match this registry"
        )


@dataclass(frozen=True)
class FeatureVector:
    schema_id: str
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.schema_id not in SCHEMAS:
            raise SchemaError(f"unknown feature schema {self.schema_id!r}")
        expected = len(SCHEMAS[self.schema_id])
        if len(self.values) != expected:
            raise SchemaError(
                f"schema {self.schema_id!r} expects {expected} values, got {len(self.values)}"
            )
        if not all(np.isfinite(v) for v in self.values):
            raise SchemaError(f"non-finite feature value in schema {self.schema_id!r}")

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)


def _popvar(x: np.ndarray) -> float:
    return float(np.var(x))


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    va, vb = np.var(a), np.var(b)
    if va == 0.0 or vb == 0.0:
        return 0.0
    cov = float(np.mean((a - a.mean()) * (b - b.mean())))
    return cov / float(np.sqrt(va * vb))


def activity_features(w: Window) -> FeatureVector:
    """[mean |a|, mean |jerk|] over a window of high-passed samples."""
    if len(w) < 2:
        raise InsufficientDataError("activity features need >= 2 samples")
    mags = magnitude_series(w.xyz)
    jerk = jerk_series(mags)
    return FeatureVector("activity", (float(np.mean(mags)), float(np.mean(np.abs(jerk)))))


def motion_auth_features(w: Window) -> FeatureVector:
    """Per-axis means/variances, norm mean/variance, and pairwise correlations."""
    if len(w) < 2:
        raise InsufficientDataError("motion features need >= 2 samples")
    x, y, z = w.xyz[:, 0], w.xyz[:, 1], w.xyz[:, 2]
    norm = magnitude_series(w.xyz)
    values = (
        float(np.mean(x)),
        float(np.mean(y)),
        float(np.mean(z)),
        _popvar(x),
        _popvar(y),
        _popvar(z),
        float(np.mean(norm)),
        _popvar(norm),
        _pearson(x, y),
        _pearson(x, z),
        _pearson(y, z),
    )
    return FeatureVector("motion-auth", values)


def _downmix(samples: np.ndarray, n_target: int = DFT_POINTS) -> np.ndarray:
    """Block-average to ``n_target`` points (identity for short frames)."""
    n = len(samples)
    if n <= n_target:
        return samples.astype(float)
    block = n // n_target
    usable = block * n_target
    return samples[:usable].reshape(n_target, block).mean(axis=1)


def dft_magnitude_variance(samples: np.ndarray) -> float:
    """Population variance of the one-sided DFT magnitude spectrum, DC excluded."""
    down = _downmix(np.asarray(samples, dtype=float))
    if len(down) < 2:
        return 0.0
    mags = np.abs(np.fft.rfft(down))[1:]
    return float(np.var(mags))


def audio_auth_features(frame: AudioFrame) -> FeatureVector:
    """[mean, variance, energy, DFT-magnitude variance] of one audio window."""
    s = frame.samples
    if len(s) == 0:
        raise InsufficientDataError("audio frame is empty")
    values = (
        float(np.mean(s)),
        _popvar(s),
        float(np.mean(s * s)),
        dft_magnitude_variance(s),
    )
    return FeatureVector("audio-auth", values)


def shock_features(w: Window, frame: AudioFrame) -> FeatureVector:
    """Impact-oriented statistics of an unfiltered window plus its audio span."""
    if len(w) < 2:
        raise InsufficientDataError("shock features need >= 2 samples")
    if len(frame.samples) == 0:
        raise InsufficientDataError("shock features need a non-empty audio frame")
    norm = magnitude_series(w.xyz)
    jerk = jerk_series(norm)
    s = frame.samples
    values = (
        float(np.mean(norm)),
        _popvar(norm),
        float(np.max(norm)),
        float(np.mean(np.abs(jerk))),
        float(np.mean(s)),
        _popvar(s),
        float(np.mean(s * s)),
        float(np.max(np.abs(s))),
    )
    return FeatureVector("shock", values)


def instance_features(windows: list[FeatureVector]) -> FeatureVector:
    """Element-wise mean of same-schema vectors (a 10 s instance from sub-windows)."""
    if not windows:
        raise InsufficientDataError("cannot average an empty feature list")
    schema = windows[0].schema_id
    if any(v.schema_id != schema for v in windows):
        raise SchemaError("instance averaging requires a homogeneous schema")
    stacked = np.stack([v.as_array() for v in windows])
    return FeatureVector(schema, tuple(float(v) for v in stacked.mean(axis=0)))
