"""Mel targets, conditioning export and an excitation-based debug synthesizer.

Conditioning files use the CND1 layout: ``b"CND1"``, u32 T, u32 D, then
``T * D`` little-endian f32 values row by row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import binio
from .frames import frames_for_samples

MAGIC = b"CND1"


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 24000
    hop: int = 240
    window: int = 1024
    fft: int = 1024
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 12000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if not self.hop <= self.window <= self.fft:
            raise ValueError("need hop <= window <= fft")
        if self.fmax > self.sample_rate / 2:
            raise ValueError("fmax above Nyquist")
        if self.fft & (self.fft - 1):
            raise ValueError(f"fft size {self.fft} is not a power of two")

    @property
    def hop_s(self) -> float:
        return self.hop / self.sample_rate


def frame_signal(signal: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Hann-windowed frames ``(T, fft)``, frame t centred at ``t*hop + hop//2``.

    Edges are reflection-padded so ``T`` follows the shared frame-count rule.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.size == 0:
        raise ValueError("empty signal")
    n_frames = frames_for_samples(len(signal), cfg.hop)
    left = cfg.window // 2
    right = max(0, n_frames * cfg.hop + cfg.window - len(signal))
    mode = "reflect" if len(signal) > 1 else "edge"
    padded = np.pad(signal, (left, right), mode=mode)
    starts = np.arange(n_frames) * cfg.hop + cfg.hop // 2
    idx = starts[:, None] + np.arange(cfg.window)[None, :]
    frames = padded[idx] * np.hanning(cfg.window + 1)[:-1]  # periodic Hann
    if cfg.fft > cfg.window:
        off = (cfg.fft - cfg.window) // 2
        frames = np.pad(frames, ((0, 0), (off, cfg.fft - cfg.window - off)))
    return frames


def stft(signal: np.ndarray, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Magnitude spectrogram ``(T, fft//2 + 1)``."""
    return np.abs(np.fft.rfft(frame_signal(signal, cfg), n=cfg.fft, axis=1))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_centers(cfg: MelConfig) -> np.ndarray:
    """Centre frequency in Hz of each HTK triangular filter."""
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    return edges[1:-1]


def mel_filterbank(cfg: MelConfig = MelConfig()) -> np.ndarray:
    """``(n_mels, fft//2 + 1)`` triangles with unit peak on the HTK mel scale."""
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    freqs = np.arange(cfg.fft // 2 + 1) * cfg.sample_rate / cfg.fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def mel_spectrogram(signal: np.ndarray, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Natural-log mel power ``(T, n_mels)`` floored at ``log_floor``."""
    power = stft(signal, cfg) ** 2
    mel = power @ mel_filterbank(cfg).T
    return np.log(np.maximum(mel, cfg.log_floor)).astype(np.float32)


# --------------------------------------------------------------------------
# CND1


def conditioning_bytes(frames: np.ndarray) -> bytes:
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 2:
        raise ValueError("conditioning frames must be 2-D")
    T, D = frames.shape
    return MAGIC + binio.u32(T) + binio.u32(D) + binio.f32_rows(frames)


def export_conditioning(frames, path) -> None:
    """Write a CND1 file from ``(T, D)`` frames or anything with a ``.cond`` attribute."""
    frames = getattr(frames, "cond", frames)
    with open(path, "wb") as fh:
        fh.write(conditioning_bytes(frames))


def parse_conditioning(reader: binio.Reader) -> np.ndarray:
    reader.magic(MAGIC)
    T = reader.u32("frame count")
    D = reader.u32("dimension")
    out = reader.array("<f4", T * D, "frames").reshape(T, D)
    reader.finish()
    return out.astype(np.float32)


def import_conditioning(path) -> np.ndarray:
    return parse_conditioning(binio.read_file(path))


# --------------------------------------------------------------------------
# Debug synthesis


def frame_energy(log_mel: np.ndarray) -> np.ndarray:
    """Per-frame exponentiated mean log-mel."""
    return np.exp(np.asarray(log_mel, dtype=np.float64).mean(axis=1))


def debug_synthesize(f0_hz, voiced, energy, cfg: MelConfig = MelConfig(),
                     seed: int = 0, max_harmonics: Optional[int] = None) -> np.ndarray:
    """Pulse-train/noise excitation, one frame per hop, scaled by ``energy``.

    Voiced frames sum harmonics below Nyquist of a phase accumulated sample by
    sample, so pitch changes never reset the phase; unvoiced frames get white
    noise from a seeded generator.
    """
    f0_hz = np.asarray(f0_hz, dtype=np.float64)
    voiced = np.asarray(voiced, dtype=bool)
    energy = np.asarray(energy, dtype=np.float64)
    if not len(f0_hz) == len(voiced) == len(energy):
        raise ValueError(f"frame arrays differ in length: {len(f0_hz)}, {len(voiced)}, {len(energy)}")
    hop, sr = cfg.hop, cfg.sample_rate
    f0_s = np.repeat(np.where(voiced, f0_hz, 0.0), hop)
    v_s = np.repeat(voiced, hop)
    gain = np.repeat(energy, hop)
    phase = 2.0 * np.pi * np.cumsum(f0_s / sr)
    pulses = np.zeros_like(phase)
    with np.errstate(divide="ignore"):
        n_harm = np.where(v_s, np.floor((sr / 2) / np.maximum(f0_s, 1e-9)), 0).astype(np.int64)
    if max_harmonics is not None:
        n_harm = np.minimum(n_harm, max_harmonics)
    for k in range(1, int(n_harm.max(initial=0)) + 1):
        active = n_harm >= k
        pulses[active] += np.cos(k * phase[active])
    pulses[v_s] /= n_harm[v_s]
    noise = np.random.default_rng(seed).standard_normal(len(phase)) * 0.3
    return np.where(v_s, pulses, noise) * gain
