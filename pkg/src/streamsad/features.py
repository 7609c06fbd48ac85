"""Acoustic front end: 36-d mean-normalized MFCC+delta frames at a 10 ms stride.

Per frame the static pipeline is pre-emphasis, Hamming window, magnitude
spectrum, mel filterbank (triangles starting at 150 Hz by default), log with
a 1e-10 floor, then an orthonormal DCT-II keeping coefficients 1..12 (C0
dropped). Statics get a causal sliding-window mean subtracted (1 s window),
then regression deltas and delta-deltas are appended.

Frame sequences are plain (T, D) float64 arrays; row t is the frame starting
at t * hop seconds. The batch functions (extract_mfcc, apply_cmn,
append_deltas) and the incremental FeatureExtractor share the same per-frame
arithmetic, so a stream produces the same values as a whole-file pass.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class FeatureConfig:
    window_length: float = 0.025
    hop: float = 0.010
    n_mfcc: int = 12
    mel_low: float = 150.0
    mel_high: float | None = None  # None means Nyquist
    n_mel_filters: int = 23
    cmn_window: float = 1.0
    delta_window: int = 2
    pre_emphasis: float = 0.97
    n_fft: int | None = None  # None means next power of two >= window samples

    def __post_init__(self):
        if not (0.0 < self.hop <= self.window_length):
            raise ValueError("need 0 < hop <= window_length")
        if not (1 <= self.n_mfcc <= self.n_mel_filters):
            raise ValueError("need 1 <= n_mfcc <= n_mel_filters")
        if self.mel_low < 0:
            raise ValueError("mel_low must be non-negative")
        if self.cmn_window < self.hop:
            raise ValueError("cmn_window must cover at least one frame")
        if self.delta_window < 1:
            raise ValueError("delta_window must be >= 1")
        if not (0.0 <= self.pre_emphasis < 1.0):
            raise ValueError("pre_emphasis must be in [0, 1)")

    def window_samples(self, sample_rate: int) -> int:
        return int(round(self.window_length * sample_rate))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(self.hop * sample_rate))

    def cmn_frames(self) -> int:
        return int(round(self.cmn_window / self.hop))

    def fft_size(self, sample_rate: int) -> int:
        if self.n_fft is not None:
            return self.n_fft
        size = 1
        while size < self.window_samples(sample_rate):
            size *= 2
        return size

    @property
    def output_dim(self) -> int:
        return 3 * self.n_mfcc


def frame_count(n_samples: int, cfg: FeatureConfig, sample_rate: int) -> int:
    """Number of full analysis windows; pure function of length and cfg."""
    win = cfg.window_samples(sample_rate)
    hop = cfg.hop_samples(sample_rate)
    if n_samples < win:
        return 0
    return (n_samples - win) // hop + 1


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, n_fft: int, n_filters: int, f_low: float, f_high: float) -> np.ndarray:
    """Triangular mel filters evaluated at FFT bin frequencies, (n_filters, n_fft//2 + 1)."""
    if not (0 <= f_low < f_high <= sample_rate / 2):
        raise ValueError(f"need 0 <= f_low < f_high <= Nyquist, got [{f_low}, {f_high}]")
    points = mel_to_hz(np.linspace(hz_to_mel(f_low), hz_to_mel(f_high), n_filters + 2))
    bins = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    bank = np.zeros((n_filters, len(bins)))
    for m in range(n_filters):
        left, center, right = points[m], points[m + 1], points[m + 2]
        rising = (bins - left) / (center - left)
        falling = (right - bins) / (right - center)
        bank[m] = np.maximum(0.0, np.minimum(rising, falling))
    return bank


def dct_matrix(n_mfcc: int, n_filters: int) -> np.ndarray:
    """Orthonormal DCT-II rows 1..n_mfcc (row 0, the overall level, excluded)."""
    n = np.arange(n_filters)
    rows = np.zeros((n_mfcc, n_filters))
    for k in range(1, n_mfcc + 1):
        rows[k - 1] = np.sqrt(2.0 / n_filters) * np.cos(np.pi * k * (2 * n + 1) / (2 * n_filters))
    return rows


class StaticMfcc:
    """Per-frame static MFCC computation with precomputed window/mel/DCT tables."""

    def __init__(self, cfg: FeatureConfig, sample_rate: int):
        self.cfg = cfg
        self.sample_rate = sample_rate
        self.win = cfg.window_samples(sample_rate)
        self.hop = cfg.hop_samples(sample_rate)
        self.n_fft = cfg.fft_size(sample_rate)
        if self.n_fft < self.win:
            raise ValueError(f"n_fft {self.n_fft} smaller than window of {self.win} samples")
        f_high = cfg.mel_high if cfg.mel_high is not None else sample_rate / 2
        self.window = np.hamming(self.win)
        self.filterbank = mel_filterbank(sample_rate, self.n_fft, cfg.n_mel_filters, cfg.mel_low, f_high)
        self.dct = dct_matrix(cfg.n_mfcc, cfg.n_mel_filters)

    def compute_block(self, frames: np.ndarray) -> np.ndarray:
        """Static MFCCs for a (T, window_samples) block of raw frames."""
        emphasized = np.empty_like(frames)
        # pre-emphasis stays inside the window so a frame never depends on
        # samples outside its own analysis window
        emphasized[:, 0] = frames[:, 0] * (1.0 - self.cfg.pre_emphasis)
        emphasized[:, 1:] = frames[:, 1:] - self.cfg.pre_emphasis * frames[:, :-1]
        spectrum = np.abs(np.fft.rfft(emphasized * self.window, n=self.n_fft, axis=1))
        energies = spectrum @ self.filterbank.T
        log_energies = np.log(np.maximum(energies, LOG_FLOOR))
        return log_energies @ self.dct.T

    def compute(self, frame: np.ndarray) -> np.ndarray:
        return self.compute_block(frame[np.newaxis, :])[0]


class CmnState:
    """Causal sliding-window mean removal (window includes the current frame)."""

    def __init__(self, cfg: FeatureConfig):
        self.buffer = deque(maxlen=cfg.cmn_frames())

    def apply(self, frame: np.ndarray) -> np.ndarray:
        self.buffer.append(frame)
        return frame - np.mean(self.buffer, axis=0)


def _regression_deltas(frames: np.ndarray, window: int) -> np.ndarray:
    """Regression slope estimate per frame; out-of-range neighbors replicate the edges."""
    n = len(frames)
    out = np.zeros_like(frames)
    for k in range(1, window + 1):
        ahead = frames[np.minimum(np.arange(n) + k, n - 1)]
        behind = frames[np.maximum(np.arange(n) - k, 0)]
        out += k * (ahead - behind)
    out /= 2.0 * sum(k * k for k in range(1, window + 1))
    return out


def extract_mfcc(audio, cfg: FeatureConfig | None = None) -> np.ndarray:
    """Static 12-d MFCCs for a whole AudioStream, (T, n_mfcc)."""
    cfg = cfg or FeatureConfig()
    static = StaticMfcc(cfg, audio.sample_rate)
    n = frame_count(len(audio.samples), cfg, audio.sample_rate)
    if n == 0:
        raise ValueError(
            f"audio shorter than one analysis window ({cfg.window_length * 1000:.0f} ms)"
        )
    offsets = np.arange(n) * static.hop
    frames = audio.samples[offsets[:, None] + np.arange(static.win)]
    return static.compute_block(frames)


def apply_cmn(frames: np.ndarray, cfg: FeatureConfig | None = None) -> np.ndarray:
    """Causal sliding-window CMN over a frame sequence."""
    cfg = cfg or FeatureConfig()
    frames = np.asarray(frames, dtype=np.float64)
    if len(frames) == 0:
        return frames.reshape(0, frames.shape[1] if frames.ndim == 2 else 0)
    state = CmnState(cfg)
    return np.stack([state.apply(f) for f in frames])


def append_deltas(frames: np.ndarray, cfg: FeatureConfig | None = None) -> np.ndarray:
    """Append regression deltas and delta-deltas: (T, D) -> (T, 3D)."""
    cfg = cfg or FeatureConfig()
    frames = np.asarray(frames, dtype=np.float64)
    if len(frames) == 0:
        raise ValueError("empty frame sequence")
    d = _regression_deltas(frames, cfg.delta_window)
    dd = _regression_deltas(d, cfg.delta_window)
    return np.hstack([frames, d, dd])


def extract_features(audio, cfg: FeatureConfig | None = None) -> np.ndarray:
    """Full front end for a whole file: statics -> CMN -> +deltas, (T, 36)."""
    cfg = cfg or FeatureConfig()
    return append_deltas(apply_cmn(extract_mfcc(audio, cfg), cfg), cfg)


class FeatureExtractor:
    """Incremental front end: push samples in any chunking, get 36-d frames out.

    Emits frame t only once every static it depends on exists (deltas need
    statics through t + 2*delta_window), so mid-stream output never depends
    on how the samples were chunked. flush() finishes the tail using the
    same edge replication as the batch path.
    """

    def __init__(self, cfg: FeatureConfig, sample_rate: int):
        self.cfg = cfg
        self.static = StaticMfcc(cfg, sample_rate)
        self.cmn = CmnState(cfg)
        self.pending = np.empty(0, dtype=np.float64)
        self.statics: deque[np.ndarray] = deque()
        self.deltas: deque[np.ndarray] = deque()
        self.statics_base = 0  # absolute index of statics[0]
        self.deltas_base = 0
        self.n_statics = 0
        self.n_deltas = 0
        self.n_emitted = 0
        self.finished = False
        w = cfg.delta_window
        self._denom = 2.0 * sum(k * k for k in range(1, w + 1))

    def _static_at(self, t: int) -> np.ndarray:
        return self.statics[t - self.statics_base]

    def _delta_at_abs(self, t: int, last: int) -> np.ndarray:
        w = self.cfg.delta_window
        out = np.zeros_like(self.deltas[0])
        for k in range(1, w + 1):
            out += k * (
                self.deltas[min(t + k, last) - self.deltas_base]
                - self.deltas[max(t - k, 0) - self.deltas_base]
            )
        out /= self._denom
        return out

    def _compute_delta(self, t: int, last: int) -> np.ndarray:
        w = self.cfg.delta_window
        out = np.zeros_like(self.statics[0])
        for k in range(1, w + 1):
            out += k * (self._static_at(min(t + k, last)) - self._static_at(max(t - k, 0)))
        out /= self._denom
        return out

    def _advance(self, last_static: int | None, last_delta: int | None) -> list[np.ndarray]:
        """Produce every delta/output frame whose inputs are now determined.

        last_static/last_delta are the final sequence indices once known
        (at flush); None while the stream may still grow.
        """
        w = self.cfg.delta_window
        # deltas: frame t needs statics t-w .. t+w
        limit = self.n_statics - 1 if last_static is not None else self.n_statics - 1 - w
        while self.n_deltas <= limit:
            t = self.n_deltas
            hi = last_static if last_static is not None else t + w
            self.deltas.append(self._compute_delta(t, hi))
            self.n_deltas += 1

        out = []
        limit = self.n_deltas - 1 if last_delta is not None else self.n_deltas - 1 - w
        while self.n_emitted <= limit:
            t = self.n_emitted
            hi = last_delta if last_delta is not None else t + w
            dd = self._delta_at_abs(t, hi)
            out.append(np.concatenate([self._static_at(t), self.deltas[t - self.deltas_base], dd]))
            self.n_emitted += 1

        # drop history nothing can reference any more: future deltas reach
        # back to n_deltas - w, future emissions need static[n_emitted]
        while self.statics_base < min(self.n_emitted, self.n_deltas - w):
            self.statics.popleft()
            self.statics_base += 1
        while self.deltas_base < self.n_emitted - w:
            self.deltas.popleft()
            self.deltas_base += 1
        return out

    def push(self, samples) -> list[np.ndarray]:
        """Feed samples; returns the newly completed 36-d frames."""
        if self.finished:
            raise RuntimeError("push after flush")
        samples = np.asarray(samples, dtype=np.float64)
        self.pending = np.concatenate([self.pending, samples]) if len(self.pending) else samples
        win, hop = self.static.win, self.static.hop
        while len(self.pending) >= win:
            raw = self.cmn.apply(self.static.compute(self.pending[:win]))
            self.statics.append(raw)
            self.n_statics += 1
            self.pending = self.pending[hop:]
        return self._advance(None, None)

    def flush(self) -> list[np.ndarray]:
        """Finish the stream; returns the remaining frames."""
        if self.finished:
            return []
        self.finished = True
        if self.n_statics == 0:
            return []
        out = self._advance(self.n_statics - 1, None)
        out += self._advance(self.n_statics - 1, self.n_deltas - 1)
        return out

    def process(self, samples) -> np.ndarray:
        """push + flush convenience; returns all frames as one (T, 36) array."""
        frames = self.push(samples) + self.flush()
        if not frames:
            raise ValueError(
                f"audio shorter than one analysis window ({self.cfg.window_length * 1000:.0f} ms)"
            )
        return np.stack(frames)
