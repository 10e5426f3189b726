"""Track pitch on synthetic sines, a glide and silence; print voicing and median error.

    python3 scripts/pitch_demo.py
"""

import numpy as np

from ttsfront import pitch

SR = 24000


def main():
    t = np.arange(2 * SR) / SR
    for f0 in (80, 120, 150, 220, 300):
        track = pitch.extract_pitch(0.5 * np.sin(2 * np.pi * f0 * t), SR)
        med = np.median(track.f0_hz[track.voiced])
        print(f"sine {f0:3d} Hz: {track.voiced.mean():6.1%} voiced, median {med:7.2f} Hz "
              f"({100 * (med - f0) / f0:+.2f}%)")
    # glide 100 -> 250 Hz
    f = np.linspace(100, 250, len(t))
    track = pitch.extract_pitch(0.5 * np.sin(2 * np.pi * np.cumsum(f) / SR), SR)
    truth = f[np.minimum(np.arange(len(track)) * 240 + 120, len(f) - 1)]
    err = np.abs(track.f0_hz - truth)[track.voiced] / truth[track.voiced]
    print(f"glide 100-250 Hz: {track.voiced.mean():.1%} voiced, mean abs error {100 * err.mean():.2f}%")
    silence = pitch.extract_pitch(np.zeros(2 * SR), SR)
    print(f"silence: {1 - silence.voiced.mean():.1%} unvoiced")


if __name__ == "__main__":
    main()
