"""Shared helpers and heavyweight fixtures for the suite."""

from __future__ import annotations

import numpy as np
import pytest

from actimon.features import shock_features
from actimon.models import TrainConfig, mlp_train
from actimon.signals import AudioFrame, Window, audio_slice
from actimon.synth import (
    FallGenSpec,
    NORMAL_VARIANTS,
    POST_PICKED_UP,
    gen_fall_trace,
    gen_normal_trace,
)

TRAIN_VARIANTS = tuple(v for v in NORMAL_VARIANTS if v != "slam")


def span_window(stream, t0: float, t1: float) -> Window:
    sel = (stream.t >= t0) & (stream.t < t1)
    return Window(t0, t1, stream.t[sel], stream.xyz[sel])


def span_frame(frames, t0: float, t1: float) -> AudioFrame:
    samples = audio_slice(frames, t0, t1)
    if len(samples) == 0:
        samples = np.zeros(2)
    return AudioFrame(t0, 8000.0, samples)


def build_shock_training(seed: int, n_shock: int, n_normal: int):
    feats, labels = [], []
    for i in range(n_shock):
        stream, frames, truth = gen_fall_trace(FallGenSpec(seed=[seed, 201, i]))
        ti = truth["t_impact"]
        feats.append(
            shock_features(span_window(stream, ti - 0.3, ti + 0.7), span_frame(frames, ti - 0.3, ti + 0.7))
        )
        labels.append("shock")
    for i in range(n_normal):
        stream, frames = gen_normal_trace(TRAIN_VARIANTS[i % len(TRAIN_VARIANTS)], [seed, 202, i])
        feats.append(
            shock_features(span_window(stream, 4.0, 5.0), span_frame(frames, 4.0, 5.0))
        )
        labels.append("normal")
    return feats, labels


@pytest.fixture(scope="session")
def shock_model_small():
    """Quick shock classifier for FSM/service tests (not the full corpus)."""
    feats, labels = build_shock_training(seed=0, n_shock=12, n_normal=24)
    return mlp_train(feats, labels, TrainConfig(seed=0), iterations=1500)


@pytest.fixture(scope="session")
def fall_episode():
    """One abandoned-fall trace with ground truth, reused across tests."""
    return gen_fall_trace(FallGenSpec(seed=[9, 1, 0]), device_id="dev1")


@pytest.fixture(scope="session")
def pickup_episode():
    return gen_fall_trace(
        FallGenSpec(post_impact=POST_PICKED_UP, pickup_after_s=1.0, seed=[9, 2, 0]),
        device_id="dev2",
    )
