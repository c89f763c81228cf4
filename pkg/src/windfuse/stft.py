"""STFT analysis and weighted overlap-add synthesis with square-root Hann windows."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Waveform",
    "StftConfig",
    "Spectrogram",
    "as_matrix",
    "sqrt_hann",
    "analyze",
    "synthesize",
]


@dataclass(frozen=True)
class Waveform:
    """Real sampled signal."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """Frame length in samples; hop is fixed to half a frame."""

    frame_len: int = 512

    def __post_init__(self):
        n = int(self.frame_len)
        if n <= 0 or n & (n - 1):
            raise ValueError(f"frame_len must be a positive power of two, got {self.frame_len}")
        if n < 2:
            raise ValueError("frame_len must be at least 2")

    @property
    def hop(self) -> int:
        return self.frame_len // 2

    @property
    def fft_size(self) -> int:
        return self.frame_len

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    @classmethod
    def for_rate(cls, sample_rate: int, frame_ms: float = 32.0) -> "StftConfig":
        return cls(int(round(sample_rate * frame_ms / 1000.0)))


@dataclass(frozen=True)
class Spectrogram:
    """One-sided complex STFT, shape (num_bins, num_frames)."""

    data: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    sample_rate: int = 16000

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 2:
            raise ValueError("spectrogram data must be a 2-D matrix")
        if data.shape[0] != self.config.num_bins:
            raise ValueError(
                f"spectrogram has {data.shape[0]} bins, config expects {self.config.num_bins}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("spectrogram contains non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def num_bins(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> "Spectrogram":
        return Spectrogram(data, self.config, self.sample_rate)


def as_matrix(S) -> np.ndarray:
    """Complex data of a `Spectrogram`, or the array itself."""
    return np.asarray(getattr(S, "data", S), dtype=np.complex128)


def sqrt_hann(frame_len: int) -> np.ndarray:
    # periodic Hann: squared window sums to exactly 1 at 50% overlap
    n = np.arange(frame_len)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / frame_len))


def _ola_gain(window: np.ndarray, hop: int) -> float:
    # value of the overlap-added squared window (constant under COLA)
    return float(np.sum(window**2) / hop)


def analyze(w: Waveform, cfg: StftConfig | None = None) -> Spectrogram:
    """Complex one-sided STFT of `w`.

    Uses an orthonormal DFT, so per-frame energy is preserved (Parseval).
    Trailing samples that do not fill a whole hop are dropped.
    """
    cfg = cfg or StftConfig.for_rate(w.sample_rate)
    x = w.samples
    n, hop = cfg.frame_len, cfg.hop
    if x.shape[0] < n:
        raise ValueError(f"signal has {x.shape[0]} samples, shorter than one frame ({n})")
    num_frames = (x.shape[0] - n) // hop + 1
    idx = np.arange(n)[None, :] + hop * np.arange(num_frames)[:, None]
    frames = x[idx] * sqrt_hann(n)[None, :]
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=1, norm="ortho")
    return Spectrogram(spec.T, cfg, w.sample_rate)


def synthesize(S: Spectrogram) -> Waveform:
    """Inverse of `analyze` by weighted overlap-add.

    Output length is ``(T - 1) * hop + frame_len``; the first and last
    ``frame_len - hop`` samples are only covered by one frame.
    """
    cfg = S.config
    if S.data.shape[0] != cfg.num_bins:
        raise ValueError("spectrogram dimensions disagree with its config")
    n, hop = cfg.frame_len, cfg.hop
    window = sqrt_hann(n)
    frames = np.fft.irfft(S.data.T, n=cfg.fft_size, axis=1, norm="ortho")[:, :n]
    frames *= window[None, :] / _ola_gain(window, hop)
    num_frames = S.num_frames
    out = np.zeros((num_frames - 1) * hop + n if num_frames else 0)
    for t in range(num_frames):
        out[t * hop : t * hop + n] += frames[t]
    return Waveform(out, S.sample_rate)
