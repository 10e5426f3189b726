"""RAPT-style pitch tracking: two-pass NCCF candidates plus a Viterbi voicing path.

Pitch caches use the PTK1 layout: ``b"PTK1"``, u32 frame count, then per
frame a little-endian f32 f0 (Hz) followed by a u8 voiced flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from . import binio
from .errors import DataError
from .frames import frame_center, frames_for_samples, hop_in_samples

ENERGY_FLOOR = 1e-9
MAGIC = b"PTK1"

Candidate = Tuple[float, float]  # (lag in full-rate samples, nccf)


@dataclass(frozen=True)
class PitchConfig:
    f0_min: float = 60.0
    f0_max: float = 400.0
    hop_s: float = 0.010
    corr_window_s: float = 0.025
    pass1_rate: float = 2000.0
    nccf_cand_thresh: float = 0.30
    max_cands_per_frame: int = 20
    vuv_transition_cost: float = 0.5
    freq_jump_weight: float = 0.5
    unvoiced_local_cost: float = 0.55
    # Longer lags are penalised so a periodic signal's sub-multiples lose to the true period.
    lag_weight: float = 0.3
    parabolic: bool = False

    def __post_init__(self):
        if not 0 < self.f0_min < self.f0_max < self.pass1_rate / 2:
            raise ValueError("need 0 < f0_min < f0_max < pass1_rate / 2")
        if self.hop_s <= 0:
            raise ValueError("hop_s must be positive")


@dataclass
class PitchTrack:
    f0_hz: np.ndarray
    voiced: np.ndarray
    hop_s: float = 0.010

    def __post_init__(self):
        self.f0_hz = np.asarray(self.f0_hz, dtype=np.float32)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.f0_hz.shape != self.voiced.shape:
            raise ValueError("f0 and voicing arrays differ in length")

    def __len__(self) -> int:
        return len(self.f0_hz)


def nccf(signal: np.ndarray, frame_start: int, window: int, lag: int) -> float:
    """Normalised cross-correlation of a window with its ``lag``-shifted copy."""
    if lag < 0 or frame_start < 0 or frame_start + window + lag > len(signal):
        raise IndexError(f"lag {lag} at frame start {frame_start} runs past the signal")
    x = np.asarray(signal[frame_start:frame_start + window], dtype=np.float64)
    y = np.asarray(signal[frame_start + lag:frame_start + lag + window], dtype=np.float64)
    ex, ey = float(x @ x), float(y @ y)
    if ex < ENERGY_FLOOR or ey < ENERGY_FLOOR:
        return 0.0
    return float(x @ y) / math.sqrt(ex * ey)


def _nccf_lags(sig: np.ndarray, sq_cumsum: np.ndarray, start: int, window: int,
               lags: np.ndarray) -> np.ndarray:
    """``nccf`` for many lags at one frame; ``sig`` is padded so all reads are in range."""
    x = sig[start:start + window]
    ex = sq_cumsum[start + window] - sq_cumsum[start]
    lo, hi = int(lags[0]), int(lags[-1])
    block = np.lib.stride_tricks.sliding_window_view(sig[start + lo:start + hi + window], window)
    num = block[lags - lo] @ x
    ey = sq_cumsum[start + lags + window] - sq_cumsum[start + lags]
    out = np.zeros(len(lags))
    ok = (ey >= ENERGY_FLOOR) & (ex >= ENERGY_FLOOR)
    out[ok] = num[ok] / np.sqrt(ex * ey[ok])
    return np.clip(out, -1.0, 1.0)


def _decimate(signal: np.ndarray, factor: int) -> np.ndarray:
    """Block-average low-pass followed by downsampling."""
    if factor == 1:
        return signal.copy()
    n = len(signal) // factor * factor
    return signal[:n].reshape(-1, factor).mean(axis=1)


def _local_peaks(values: np.ndarray, thresh: float) -> np.ndarray:
    """Indices ``1..len-2`` that are local maxima above ``thresh``."""
    mid = values[1:-1]
    is_peak = (mid >= values[:-2]) & (mid > values[2:]) & (mid > thresh)
    return np.nonzero(is_peak)[0] + 1


def _padded(signal: np.ndarray, left: int, right: int) -> Tuple[np.ndarray, np.ndarray]:
    sig = np.concatenate([np.zeros(left), np.asarray(signal, dtype=np.float64), np.zeros(right)])
    cs = np.concatenate([[0.0], np.cumsum(sig * sig)])
    return sig, cs


def candidates_two_pass(signal: np.ndarray, sample_rate: int,
                        cfg: PitchConfig = PitchConfig()) -> List[List[Candidate]]:
    """Per-frame pitch candidates ``(lag, nccf)`` at the full sample rate.

    Pass 1 scans every admissible lag on a decimated copy; pass 2 refines each
    coarse peak at full rate within one decimation step either side.
    """
    if sample_rate < 2 * cfg.f0_max:
        raise ValueError(f"sample rate {sample_rate} below 2 * f0_max")
    signal = np.asarray(signal, dtype=np.float64)
    hop = hop_in_samples(cfg.hop_s, sample_rate)
    n_frames = frames_for_samples(len(signal), hop)
    window = max(2, int(round(cfg.corr_window_s * sample_rate)))
    lag_lo = math.ceil(sample_rate / cfg.f0_max)
    lag_hi = math.floor(sample_rate / cfg.f0_min)

    factor = max(1, int(round(sample_rate / cfg.pass1_rate)))
    rate1 = sample_rate / factor
    window1 = max(2, int(round(cfg.corr_window_s * rate1)))
    lag1_lo = max(1, math.floor(rate1 / cfg.f0_max) - 1)
    lag1_hi = math.ceil(rate1 / cfg.f0_min) + 1
    lags1 = np.arange(lag1_lo, lag1_hi + 1)
    refine = math.ceil(sample_rate / rate1)

    pad_left = window + factor
    sig, cs = _padded(signal, pad_left, window + lag_hi + refine + factor + hop)
    dec = _decimate(sig, factor)
    dec_cs = np.concatenate([[0.0], np.cumsum(dec * dec)])
    # dec gets zero padding on the right for the longest coarse lag
    dec = np.concatenate([dec, np.zeros(window1 + lag1_hi + 1)])
    dec_cs = np.concatenate([dec_cs, np.full(window1 + lag1_hi + 1, dec_cs[-1])])

    last_start = max(0, len(signal) - window)
    out: List[List[Candidate]] = []
    for t in range(n_frames):
        # edge frames slide their window inward instead of reading padding
        start = pad_left + min(max(frame_center(t, hop) - window // 2, 0), last_start)
        start1 = int(round((start + window // 2) / factor)) - window1 // 2
        coarse = _nccf_lags(dec, dec_cs, start1, window1, lags1)
        peaks = _local_peaks(coarse, cfg.nccf_cand_thresh)
        found = {}
        for p in peaks:
            mid = int(lags1[p]) * factor
            lo, hi = max(lag_lo, mid - refine), min(lag_hi, mid + refine)
            if lo > hi:
                continue
            lags = np.arange(lo, hi + 1)
            fine = _nccf_lags(sig, cs, start, window, lags)
            k = int(np.argmax(fine))
            if fine[k] <= cfg.nccf_cand_thresh:
                continue
            lag = float(lags[k])
            if cfg.parabolic and 0 < k < len(fine) - 1:
                a, b, c = fine[k - 1], fine[k], fine[k + 1]
                denom = a - 2 * b + c
                if denom < 0:
                    lag += 0.5 * (a - c) / denom
                    lag = min(max(lag, lag_lo), lag_hi)
            found[int(lags[k])] = (lag, float(fine[k]))
        cands = sorted(found.values(), key=lambda c: -c[1])[:cfg.max_cands_per_frame]
        out.append(cands)
    return out


def _local_costs(frame: Sequence[Candidate], cfg: PitchConfig, max_lag: float) -> np.ndarray:
    costs = [1.0 - v * (1.0 - cfg.lag_weight * lag / max_lag) for lag, v in frame]
    return np.array(costs + [cfg.unvoiced_local_cost])


def _transition(prev: Sequence[Candidate], cur: Sequence[Candidate], cfg: PitchConfig) -> np.ndarray:
    """Matrix ``[i, j]`` of costs from state i of the previous frame to state j.

    The last state of each frame is unvoiced.
    """
    np_, nc = len(prev), len(cur)
    trans = np.zeros((np_ + 1, nc + 1))
    if np_ and nc:
        lp = np.log([c[0] for c in prev])
        lc = np.log([c[0] for c in cur])
        trans[:np_, :nc] = cfg.freq_jump_weight * np.abs(lp[:, None] - lc[None, :])
    trans[:np_, nc] = cfg.vuv_transition_cost
    trans[np_, :nc] = cfg.vuv_transition_cost
    return trans


def best_path(cands: Sequence[Sequence[Candidate]], cfg: PitchConfig,
              sample_rate: float) -> Tuple[List[int], float]:
    """Minimum-cost state sequence; state ``len(cands[t])`` means unvoiced."""
    if not cands:
        return [], 0.0
    max_lag = sample_rate / cfg.f0_min
    cost = _local_costs(cands[0], cfg, max_lag)
    back = []
    for t in range(1, len(cands)):
        total = cost[:, None] + _transition(cands[t - 1], cands[t], cfg)
        arg = np.argmin(total, axis=0)
        back.append(arg)
        cost = total[arg, np.arange(total.shape[1])] + _local_costs(cands[t], cfg, max_lag)
    state = int(np.argmin(cost))
    best = float(cost[state])
    path = [state]
    for arg in reversed(back):
        state = int(arg[state])
        path.append(state)
    return path[::-1], best


def dp_track(cands: Sequence[Sequence[Candidate]], cfg: PitchConfig,
             sample_rate: float) -> PitchTrack:
    path, _ = best_path(cands, cfg, sample_rate)
    f0 = np.zeros(len(cands), dtype=np.float32)
    voiced = np.zeros(len(cands), dtype=bool)
    for t, s in enumerate(path):
        if s < len(cands[t]):
            voiced[t] = True
            f0[t] = min(max(sample_rate / cands[t][s][0], cfg.f0_min), cfg.f0_max)
    return PitchTrack(f0, voiced, cfg.hop_s)


def extract_pitch(audio: np.ndarray, sample_rate: int,
                  cfg: PitchConfig = PitchConfig()) -> PitchTrack:
    """Frame-level f0 and voicing; frame ``t`` is centred mid-way through its hop."""
    return dp_track(candidates_two_pass(audio, sample_rate, cfg), cfg, sample_rate)


@dataclass(frozen=True)
class F0Stats:
    mean: float
    std: float


def f0_statistics(tracks: Iterable[PitchTrack], min_voiced: int = 100) -> F0Stats:
    """Mean and std of ln f0 over the voiced frames of one speaker's tracks."""
    logs = [np.log(t.f0_hz[t.voiced].astype(np.float64)) for t in tracks]
    values = np.concatenate(logs) if logs else np.zeros(0)
    if len(values) < min_voiced:
        raise DataError(f"only {len(values)} voiced frames, need at least {min_voiced}")
    return F0Stats(float(values.mean()), max(float(values.std()), 1e-3))


def normalize_f0(track: PitchTrack, stats: F0Stats) -> np.ndarray:
    out = np.zeros(len(track), dtype=np.float32)
    v = track.voiced
    out[v] = (np.log(track.f0_hz[v].astype(np.float64)) - stats.mean) / stats.std
    return out


def denormalize_f0(values: np.ndarray, voiced: np.ndarray, stats: F0Stats) -> np.ndarray:
    f0 = np.exp(np.asarray(values, dtype=np.float64) * stats.std + stats.mean)
    return np.where(voiced, f0, 0.0).astype(np.float32)


_PTK_FRAME = np.dtype([("f0", "<f4"), ("voiced", "u1")])


def pitch_bytes(track: PitchTrack) -> bytes:
    frames = np.empty(len(track), dtype=_PTK_FRAME)
    frames["f0"] = track.f0_hz
    frames["voiced"] = track.voiced
    return MAGIC + binio.u32(len(track)) + frames.tobytes()


def write_pitch(path, track: PitchTrack) -> None:
    with open(path, "wb") as fh:
        fh.write(pitch_bytes(track))


def parse_pitch(reader: binio.Reader, hop_s: float = 0.010) -> PitchTrack:
    reader.magic(MAGIC)
    n = reader.u32("frame count")
    frames = reader.array(_PTK_FRAME, n, "frames")
    reader.finish()
    return PitchTrack(frames["f0"], frames["voiced"].astype(bool), hop_s)


def read_pitch(path, hop_s: float = 0.010) -> PitchTrack:
    return parse_pitch(binio.read_file(path), hop_s)
