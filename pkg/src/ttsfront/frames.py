"""The frame-count rule shared by durations, pitch and mel extraction.

Every frame-level stream uses ``round_half_up(duration / hop)`` frames, so an
utterance produces the same ``T`` no matter which extractor computed it.
"""

import math

# Quantisation applied before rounding; absorbs binary float error such as
# 0.015 / 0.01 == 1.4999999999999998.
_DECIMALS = 9


def round_half_up(x: float) -> int:
    return int(math.floor(round(x, _DECIMALS) + 0.5))


def frames_for_duration(duration_s: float, hop_s: float) -> int:
    if hop_s <= 0:
        raise ValueError("hop must be positive")
    return round_half_up(duration_s / hop_s)


def frames_for_samples(n_samples: int, hop_samples: int) -> int:
    if hop_samples <= 0:
        raise ValueError("hop must be positive")
    return round_half_up(n_samples / hop_samples)


def hop_in_samples(hop_s: float, sample_rate: int) -> int:
    return round_half_up(hop_s * sample_rate)


def frame_center(t: int, hop_samples: int) -> int:
    """Sample index at the middle of frame ``t``'s hop interval."""
    return t * hop_samples + hop_samples // 2
