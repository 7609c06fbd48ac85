"""Synthetic labeled corpus: two spectrally distinct classes, known truth.

"Speech" is band-limited noise (300..2300 Hz) with a slow amplitude
modulation, dropped into a stationary white background at a controllable
SNR; everything outside the bursts is background only. Labels are exact by
construction, which makes the corpus suitable for end-to-end accuracy
checks without any real audio.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio_io import NONSPEECH, SPEECH, SegmentLabel, write_labels, write_wav

SPEECH_BAND = (300.0, 2300.0)


def _bandpass_noise(rng: np.random.Generator, n: int, sample_rate: int, band) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spectrum[(freqs < band[0]) | (freqs > band[1])] = 0.0
    return np.fft.irfft(spectrum, n)


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x**2)))


def make_recording(
    rng: np.random.Generator,
    duration: float = 20.0,
    sample_rate: int = 8000,
    snr_db: float = 15.0,
):
    """One recording plus its exact segmentation.

    Returns (samples, segments); segments partition [0, duration) into
    alternating non-speech/speech labels.
    """
    n = int(round(duration * sample_rate))
    noise_rms = 10.0 ** (-snr_db / 20.0)
    samples = rng.standard_normal(n) * noise_rms

    bursts = []
    t = float(rng.uniform(0.6, 1.5))
    while True:
        length = float(rng.uniform(1.5, 4.0))
        if t + length > duration - 0.5:
            break
        bursts.append((t, t + length))
        t = t + length + float(rng.uniform(1.0, 3.0))
    if not bursts and duration >= 1.0:
        # very short recording: force one burst in the middle
        bursts.append((0.3 * duration, 0.7 * duration))

    for start, end in bursts:
        i0, i1 = int(round(start * sample_rate)), int(round(end * sample_rate))
        burst = _bandpass_noise(rng, i1 - i0, sample_rate, SPEECH_BAND)
        mod_freq = rng.uniform(2.5, 6.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        tau = np.arange(i1 - i0) / sample_rate
        envelope = 0.25 + 0.375 * (1.0 + np.sin(2.0 * np.pi * mod_freq * tau + phase))
        burst *= envelope
        samples[i0:i1] += burst / _rms(burst)

    peak = np.max(np.abs(samples))
    if peak > 0.9:
        samples *= 0.9 / peak

    segments = []
    cursor = 0.0
    for start, end in bursts:
        if start > cursor:
            segments.append(SegmentLabel(cursor, start, NONSPEECH))
        segments.append(SegmentLabel(start, end, SPEECH))
        cursor = end
    if cursor < duration:
        segments.append(SegmentLabel(cursor, duration, NONSPEECH))
    return samples, segments


def make_corpus(
    root,
    n_files: int,
    duration: float = 20.0,
    sample_rate: int = 8000,
    seed: int = 0,
    snr_center_db: float = 15.0,
    snr_spread_db: float = 10.0,
) -> list:
    """Write n_files recordings + label files under root; returns (wav, lab) pairs.

    File SNRs sweep snr_center ± snr_spread evenly, so the corpus spans the
    whole condition range deterministically.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    if n_files > 1:
        snrs = np.linspace(snr_center_db - snr_spread_db, snr_center_db + snr_spread_db, n_files)
    else:
        snrs = np.array([snr_center_db])
    entries = []
    children = np.random.SeedSequence(seed).spawn(n_files)
    for i, (child, snr) in enumerate(zip(children, snrs)):
        rng = np.random.default_rng(child)
        samples, segments = make_recording(rng, duration, sample_rate, float(snr))
        wav_path = root / f"rec{i:03d}.wav"
        lab_path = root / f"rec{i:03d}.lab"
        write_wav(wav_path, sample_rate, samples)
        write_labels(lab_path, segments)
        entries.append((wav_path, lab_path))
    return entries


def write_manifest(path, entries) -> None:
    """Write entries as `audio<TAB>labels` lines, paths relative to the manifest."""
    path = Path(path)
    lines = []
    for audio, labels in entries:
        audio, labels = Path(audio), Path(labels)
        try:
            audio = audio.relative_to(path.parent)
            labels = labels.relative_to(path.parent)
        except ValueError:
            pass  # outside the manifest dir: keep as given
        lines.append(f"{audio}\t{labels}\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)
