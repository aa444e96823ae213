"""Baseline 39-dimensional MFCC frontend with optional context splicing.

The pipeline is fixed and documented as the contract: pre-emphasis, Hamming
window, magnitude-squared spectrum, 26 triangular mel filters (HTK scale,
0 to Nyquist), floored log, orthonormal DCT-II keeping c0..c12, then delta
and delta-delta by regression over +/-2 frames with edge replication.
No padding: n_frames = floor((N - window) / hop) + 1.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .errors import DataError
from .store import FeatureMatrix


@dataclass(frozen=True)
class MfccConfig:
    sample_rate: int = 16000
    window_len: float = 0.025
    hop: float = 0.010
    n_fft: int = 512
    n_mels: int = 26
    n_ceps: int = 13
    pre_emphasis: float = 0.97
    delta_window: int = 2
    context_frames: int = 5
    log_floor: float = 1e-10

    def __post_init__(self) -> None:
        if not (self.window_len >= self.hop > 0):
            raise DataError("require window_len >= hop > 0")
        if self.n_ceps > self.n_mels:
            raise DataError("require n_ceps <= n_mels")
        if self.context_frames < 1 or self.context_frames % 2 == 0:
            raise DataError("context_frames must be odd and >= 1")
        if self.sample_rate <= 0:
            raise DataError("sample_rate must be > 0")
        if self.n_fft < self.window_samples:
            raise DataError("n_fft must cover the analysis window")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_len * self.sample_rate))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop * self.sample_rate))


def hz_to_mel(f: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters on the HTK mel scale, rows n_mels x (n_fft//2 + 1)."""
    mels = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_mels + 2)
    bins = np.floor((n_fft + 1) * mel_to_hz(mels) / sample_rate).astype(np.int64)
    fb = np.zeros((n_mels, n_fft // 2 + 1), dtype=np.float64)
    for j in range(n_mels):
        lo, mid, hi = bins[j], bins[j + 1], bins[j + 2]
        for i in range(lo, mid):
            fb[j, i] = (i - lo) / max(mid - lo, 1)
        for i in range(mid, hi):
            fb[j, i] = (hi - i) / max(hi - mid, 1)
    return fb


def _deltas(c: np.ndarray, window: int) -> np.ndarray:
    # regression deltas with edge replication; denominator 2 * sum(n^2)
    padded = np.concatenate([c[:1].repeat(window, axis=0), c, c[-1:].repeat(window, axis=0)])
    out = np.zeros_like(c)
    for n in range(1, window + 1):
        out += n * (padded[window + n : window + n + len(c)] - padded[window - n : window - n + len(c)])
    return out / (2.0 * sum(n * n for n in range(1, window + 1)))


def mfcc_array(samples: np.ndarray, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """The 3 * n_ceps coefficient matrix at full float64 precision."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise DataError(f"samples must be 1-D, got shape {x.shape}")
    win_n, hop_n = cfg.window_samples, cfg.hop_samples
    if len(x) < win_n:
        raise DataError(f"input of {len(x)} samples is shorter than one {win_n}-sample window")

    pre = np.concatenate([x[:1], x[1:] - cfg.pre_emphasis * x[:-1]])
    n_frames = (len(pre) - win_n) // hop_n + 1
    idx = np.arange(win_n)[None, :] + hop_n * np.arange(n_frames)[:, None]
    frames = pre[idx] * np.hamming(win_n)

    power = np.abs(np.fft.rfft(frames, cfg.n_fft, axis=1)) ** 2
    fb = mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate)
    energies = power @ fb.T
    log_e = np.log(np.maximum(energies, cfg.log_floor))
    ceps = dct(log_e, type=2, norm="ortho", axis=1)[:, : cfg.n_ceps]

    d1 = _deltas(ceps, cfg.delta_window)
    d2 = _deltas(d1, cfg.delta_window)
    return np.hstack([ceps, d1, d2])


def mfcc(samples: np.ndarray, cfg: MfccConfig = MfccConfig(), utterance_id: str = "") -> FeatureMatrix:
    """Compute 3 * n_ceps static+delta+delta-delta coefficients (39 by default).

    frame_rate = sample_rate / hop_samples and offset = window_len / 2, so the
    stored metadata places each frame at its analysis-window center. Values
    are stored at the feature format's float32 precision; use ``mfcc_array``
    for the underlying float64 pipeline.
    """
    feats = mfcc_array(samples, cfg)
    return FeatureMatrix(
        utterance_id=utterance_id,
        frame_rate=cfg.sample_rate / cfg.hop_samples,
        offset=cfg.window_samples / (2.0 * cfg.sample_rate),
        data=feats,
    )


def splice(m: FeatureMatrix, context_frames: int) -> FeatureMatrix:
    """Concatenate each frame with its +/-k neighbors (edge frames replicated).

    A pure gather: every output value equals some input value exactly; the
    frame count and timing metadata are unchanged.
    """
    if context_frames < 1 or context_frames % 2 == 0:
        raise DataError(f"context_frames must be odd, got {context_frames}")
    if context_frames == 1:
        return FeatureMatrix(m.utterance_id, m.frame_rate, m.offset, m.data.copy())
    k = (context_frames - 1) // 2
    n = m.n_frames
    cols = []
    for off in range(-k, k + 1):
        rows = np.clip(np.arange(n) + off, 0, max(n - 1, 0))
        cols.append(m.data[rows])
    return FeatureMatrix(m.utterance_id, m.frame_rate, m.offset, np.hstack(cols))


def read_wav(path: str | Path, expected_sample_rate: int | None = None) -> tuple[np.ndarray, int]:
    """Read a 16-bit PCM mono WAV; returns (samples scaled to [-1, 1), rate)."""
    path = Path(path)
    with wave.open(str(path), "rb") as fh:
        n_channels = fh.getnchannels()
        width = fh.getsampwidth()
        rate = fh.getframerate()
        n = fh.getnframes()
        if n_channels != 1:
            raise DataError(f"{path}: expected mono WAV, got {n_channels} channels")
        if width != 2:
            raise DataError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
        if expected_sample_rate is not None and rate != expected_sample_rate:
            raise DataError(f"{path}: sample rate {rate} != expected {expected_sample_rate}")
        raw = fh.readframes(n)
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int) -> None:
    """Write float samples in [-1, 1) as 16-bit PCM mono (test/demo helper)."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 32767.0 / 32768.0)
    pcm = np.round(clipped * 32768.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.tobytes())
