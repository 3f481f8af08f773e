"""Sampling of pretraining tuples from temporally ordered sequences.

A first-order tuple is (t, t+D, t+G) and a second-order tuple is
(t, t+D, t+2D, t+G), where D is a small offset drawn uniformly from
[-delta_frames, delta_frames] and G a distant offset drawn uniformly from
[-(T-1), -gamma_frames] union [gamma_frames, T-1]. All emitted indices lie
in [0, T-1].

Boundary handling: the anchor t is drawn uniformly over the anchors for
which at least one valid distant offset exists (this is all of [0, T-1]
whenever T >= 2 * gamma_frames). The distant offset is drawn uniformly over
its valid subset directly, which is distributed identically to re-drawing G
with t held fixed until t+G falls in range. The near offset is re-drawn with
t held fixed, up to a bounded number of attempts; D = 0 is always valid, so
exhaustion is not reachable under the config invariants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NoValidDistantFrame, ResampleExhausted

MAX_OFFSET_ATTEMPTS = 1000


@dataclass(frozen=True)
class SamplerConfig:
    """Offsets in seconds plus the frame rate used to convert them."""

    delta_seconds: float = 30.0
    gamma_seconds: float = 120.0
    fps: float = 5.0
    tuples_per_video: int = 250

    def __post_init__(self):
        if self.delta_seconds < 0 or self.gamma_seconds < 0:
            raise ValueError("delta_seconds and gamma_seconds must be >= 0")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.tuples_per_video < 1:
            raise ValueError("tuples_per_video must be >= 1")
        if self.delta_frames >= self.gamma_frames:
            raise ValueError(
                f"derived frame offsets must satisfy delta < gamma, got "
                f"{self.delta_frames} >= {self.gamma_frames}"
            )

    @property
    def delta_frames(self) -> int:
        return round(self.delta_seconds * self.fps)

    @property
    def gamma_frames(self) -> int:
        return round(self.gamma_seconds * self.fps)


@dataclass(frozen=True)
class SampledTuple:
    """Frame indices of one pretraining example."""

    order: str  # "first" | "second"
    indices: tuple[int, ...]


def _uniform_from_ranges(ranges, rng) -> int:
    """Uniform integer from a union of disjoint inclusive [lo, hi] ranges."""
    sizes = [hi - lo + 1 for lo, hi in ranges]
    total = sum(sizes)
    k = int(rng.integers(total))
    for (lo, _), size in zip(ranges, sizes):
        if k < size:
            return lo + k
        k -= size
    raise AssertionError("unreachable")


def _anchor_ranges(num_frames: int, gamma_f: int):
    """Anchors with at least one valid distant partner."""
    last = num_frames - 1
    left = (0, last - gamma_f)  # a positive distant offset fits
    right = (gamma_f, last)  # a negative distant offset fits
    if left[1] >= right[0] - 1:
        return [(0, last)]
    return [left, right]


def _distant_ranges(t: int, num_frames: int, gamma_f: int):
    last = num_frames - 1
    ranges = []
    if t >= gamma_f:
        ranges.append((-t, -gamma_f))
    if last - t >= gamma_f:
        ranges.append((gamma_f, last - t))
    return ranges


def _sample_near_offset(t, num_frames, delta_f, rng, second_order: bool) -> int:
    last = num_frames - 1
    for _ in range(MAX_OFFSET_ATTEMPTS):
        d = int(rng.integers(-delta_f, delta_f + 1))
        if not 0 <= t + d <= last:
            continue
        if second_order and not 0 <= t + 2 * d <= last:
            continue
        return d
    raise ResampleExhausted(
        f"no valid near offset for t={t}, T={num_frames} "
        f"within {MAX_OFFSET_ATTEMPTS} attempts"
    )


def _sample(num_frames: int, cfg: SamplerConfig, rng, second_order: bool) -> SampledTuple:
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    gamma_f = cfg.gamma_frames
    if num_frames - 1 < gamma_f:
        raise NoValidDistantFrame(
            f"sequence of {num_frames} frames has no frame at distance "
            f">= {gamma_f} frames"
        )
    t = _uniform_from_ranges(_anchor_ranges(num_frames, gamma_f), rng)
    d = _sample_near_offset(t, num_frames, cfg.delta_frames, rng, second_order)
    g = _uniform_from_ranges(_distant_ranges(t, num_frames, gamma_f), rng)
    if second_order:
        return SampledTuple("second", (t, t + d, t + 2 * d, t + g))
    return SampledTuple("first", (t, t + d, t + g))


def sample_first_order(num_frames: int, cfg: SamplerConfig, rng) -> SampledTuple:
    """Draw one (t, t+D, t+G) tuple."""
    return _sample(num_frames, cfg, rng, second_order=False)


def sample_second_order(num_frames: int, cfg: SamplerConfig, rng) -> SampledTuple:
    """Draw one (t, t+D, t+2D, t+G) tuple."""
    return _sample(num_frames, cfg, rng, second_order=True)


def build_epoch_schedule(
    videos: Sequence[tuple[object, int]],
    cfg: SamplerConfig,
    rng,
    order: str = "first",
) -> list[tuple[object, SampledTuple]]:
    """Sample `tuples_per_video` tuples per video and shuffle them.

    `videos` is a sequence of (video_id, num_frames) pairs. Sampler failures
    are re-raised with the offending video named.
    """
    if order not in ("first", "second"):
        raise ValueError(f"order must be 'first' or 'second', got {order!r}")
    second = order == "second"
    schedule: list[tuple[object, SampledTuple]] = []
    for video_id, num_frames in videos:
        try:
            for _ in range(cfg.tuples_per_video):
                schedule.append((video_id, _sample(num_frames, cfg, rng, second)))
        except NoValidDistantFrame as exc:
            raise NoValidDistantFrame(f"video {video_id!r}: {exc}") from exc
    perm = rng.permutation(len(schedule))
    return [schedule[i] for i in perm]
