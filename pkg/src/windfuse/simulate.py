"""Synthetic two-channel scenarios: speech surrogate, contact-microphone
filtering, wind-noise surrogates and SNR mixing.

All constants of the simulator live in `SimConstants`. Random streams are
derived from ``(seed, stream, split)`` so that speech, wind and clicks are
drawn independently, and training material never shares seeds with test
material.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .stft import StftConfig, Waveform

__all__ = [
    "SimConstants",
    "SpeedClass",
    "Split",
    "ScenarioPair",
    "synth_speech",
    "contact_filter",
    "contact_transform",
    "synth_wind_pair",
    "mix_at_snr",
    "build_scenario",
    "rms",
]

SAMPLE_RATE = 16000
SNR_GRID_DB = (-10.0, -5.0, 0.0, 5.0)

_STREAM_SPEECH = 1
_STREAM_WIND = 2
_STREAM_CLICKS = 3
_STREAM_SCENARIO = 4


class Split(enum.IntEnum):
    TEST = 0
    TRAIN = 1


class SpeedClass(enum.Enum):
    LOW = "low"
    HIGH = "high"


@dataclass(frozen=True)
class SimConstants:
    # speech surrogate
    f0_range_hz: tuple[float, float] = (100.0, 250.0)
    partials_range: tuple[int, int] = (8, 20)
    tilt_db_per_octave: float = -6.0
    duty: tuple[float, float, float] = (0.6, 0.2, 0.2)  # voiced, unvoiced, silence
    segment_ms: tuple[float, float] = (60.0, 300.0)
    unvoiced_band_hz: tuple[float, float] = (2500.0, 6000.0)
    unvoiced_level_db: float = -6.0
    # contact microphone
    contact_order: int = 4
    contact_cutoff_hz: float = 2000.0
    # wind
    wind_pole: float = 0.98
    modulation_hz: tuple[float, float] = (0.5, 2.0)
    modulation_depth: dict = field(
        default_factory=lambda: {SpeedClass.LOW: 0.3, SpeedClass.HIGH: 0.6}
    )
    high_class_gain_db: float = 6.0
    contact_wind_atten_db: float = -20.0
    click_rate_hz: float = 0.5
    click_ms: float = 5.0
    click_level_db: float = -10.0  # mean click power relative to contact wind power
    # scenarios
    duration_s: float = 4.0


DEFAULT_CONSTANTS = SimConstants()


def _rng(seed: int, stream: int, split: Split = Split.TEST) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream), int(split)])


def rms(x) -> float:
    x = np.asarray(getattr(x, "samples", x))
    return float(np.sqrt(np.mean(x**2)))


def _num_samples(duration_s: float, sample_rate: int) -> int:
    return int(round(duration_s * sample_rate))


def _ramp(n: int, sample_rate: int, ramp_ms: float = 10.0) -> np.ndarray:
    k = min(int(sample_rate * ramp_ms / 1000.0), n // 2)
    env = np.ones(n)
    if k > 0:
        r = 0.5 - 0.5 * np.cos(np.pi * np.arange(k) / k)
        env[:k] = r
        env[n - k :] = r[::-1]
    return env


def _voiced(n: int, sample_rate: int, rng: np.random.Generator, c: SimConstants) -> np.ndarray:
    lo, hi = c.f0_range_hz
    f_start, f_end = rng.uniform(lo, hi, size=2)
    # smooth glide with a little vibrato
    t = np.arange(n) / sample_rate
    f0 = np.linspace(f_start, f_end, n) * (1.0 + 0.02 * np.sin(2 * np.pi * rng.uniform(3, 6) * t))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    n_partials = int(rng.integers(c.partials_range[0], c.partials_range[1] + 1))
    # formant-like resonance on top of the global tilt
    formant = rng.uniform(300.0, 900.0)
    out = np.zeros(n)
    for k in range(1, n_partials + 1):
        fk = k * f0
        if np.any(fk >= 0.5 * sample_rate):
            break
        tilt = 10.0 ** (c.tilt_db_per_octave * np.log2(k) / 20.0)
        boost = 1.0 + 1.5 * np.exp(-0.5 * ((fk - formant) / 150.0) ** 2)
        out += tilt * boost * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    return out


def _unvoiced(n: int, sample_rate: int, rng: np.random.Generator, c: SimConstants) -> np.ndarray:
    lo, hi = c.unvoiced_band_hz
    sos = signal.butter(4, [lo, min(hi, 0.45 * sample_rate)], btype="bandpass",
                        fs=sample_rate, output="sos")
    return signal.sosfilt(sos, rng.standard_normal(n))


def synth_speech(duration_s: float, sample_rate: int = SAMPLE_RATE, seed: int = 0,
                 constants: SimConstants = DEFAULT_CONSTANTS, *, split=Split.TEST) -> Waveform:
    """Speech-like surrogate with unit RMS.

    Alternates harmonic (voiced) segments, band-pass noise bursts
    (unvoiced) and silences with the duty cycle of `constants`.
    """
    if duration_s < 0.5:
        raise ValueError("speech surrogate needs at least 0.5 s")
    c = constants
    rng = _rng(seed, _STREAM_SPEECH, split)
    n = _num_samples(duration_s, sample_rate)
    out = np.zeros(n)
    kinds = np.array([0, 1, 2])
    pos = 0
    while pos < n:
        kind = int(rng.choice(kinds, p=np.asarray(c.duty) / np.sum(c.duty)))
        seg = int(sample_rate * rng.uniform(*c.segment_ms) / 1000.0)
        seg = min(seg, n - pos)
        if kind == 0:
            x = _voiced(seg, sample_rate, rng, c)
            out[pos : pos + seg] = x / max(rms(x), 1e-12) * _ramp(seg, sample_rate)
        elif kind == 1:
            x = _unvoiced(seg, sample_rate, rng, c)
            level = 10.0 ** (c.unvoiced_level_db / 20.0)
            out[pos : pos + seg] = level * x / max(rms(x), 1e-12) * _ramp(seg, sample_rate)
        pos += seg
    if not np.any(out):
        # degenerate draw of silences only
        out = _voiced(n, sample_rate, rng, c) * _ramp(n, sample_rate)
    return Waveform(out / rms(out), sample_rate)


def contact_filter(sample_rate: int = SAMPLE_RATE, constants: SimConstants = DEFAULT_CONSTANTS):
    """Second-order sections of the contact-microphone low-pass."""
    if sample_rate != SAMPLE_RATE:
        raise ValueError(f"contact model is defined at {SAMPLE_RATE} Hz, got {sample_rate}")
    return signal.butter(constants.contact_order, constants.contact_cutoff_hz, btype="low",
                         fs=sample_rate, output="sos")


def contact_transform(x_A: Waveform, stft: StftConfig | None = None,
                      constants: SimConstants = DEFAULT_CONSTANTS):
    """Contact-channel speech and the RTF sampled at the STFT bins."""
    sos = contact_filter(x_A.sample_rate, constants)
    stft = stft or StftConfig.for_rate(x_A.sample_rate)
    freqs = np.arange(stft.num_bins) * x_A.sample_rate / stft.fft_size
    _, rtf = signal.sosfreqz(sos, worN=freqs, fs=x_A.sample_rate)
    x_B = signal.sosfilt(sos, x_A.samples)
    return Waveform(x_B, x_A.sample_rate), np.asarray(rtf, dtype=np.complex128)


def _envelope(n: int, sample_rate: int, rng: np.random.Generator, c: SimConstants) -> np.ndarray:
    # sum of a few random sinusoids in the modulation band, scaled to [-1, 1]
    t = np.arange(n) / sample_rate
    m = np.zeros(n)
    for _ in range(4):
        m += rng.uniform(0.5, 1.0) * np.sin(2 * np.pi * rng.uniform(*c.modulation_hz) * t
                                            + rng.uniform(0, 2 * np.pi))
    return m / max(np.max(np.abs(m)), 1e-12)


def synth_wind_pair(duration_s: float, sample_rate: int = SAMPLE_RATE,
                    speed_class: SpeedClass = SpeedClass.LOW, seed: int = 0,
                    constants: SimConstants = DEFAULT_CONSTANTS, *, split=Split.TEST,
                    with_clicks: bool = True):
    """Wind-noise surrogate at the acoustic and contact microphones.

    The acoustic noise is red (one-pole) noise with a slow random amplitude
    modulation; its power is 1 for the low class and ``high_class_gain_db``
    more for the high class. The contact noise is the low-passed acoustic
    noise attenuated by ``contact_wind_atten_db`` plus independent short
    click bursts (Poisson arrivals).
    """
    if duration_s < 0.5:
        raise ValueError("wind surrogate needs at least 0.5 s")
    c = constants
    speed_class = SpeedClass(speed_class)
    rng = _rng(seed, _STREAM_WIND, split)
    n = _num_samples(duration_s, sample_rate)
    white = rng.standard_normal(n + sample_rate)
    red = signal.lfilter([1.0], [1.0, -c.wind_pole], white)[sample_rate:]
    depth = c.modulation_depth[speed_class]
    n_A = red * (1.0 + depth * _envelope(n, sample_rate, rng, c))
    power = 10.0 ** (c.high_class_gain_db / 10.0) if speed_class is SpeedClass.HIGH else 1.0
    n_A *= np.sqrt(power) / rms(n_A)

    base = signal.sosfilt(contact_filter(sample_rate, c), n_A)
    base *= rms(n_A) * 10.0 ** (c.contact_wind_atten_db / 20.0) / rms(base)
    n_B = base.copy()
    if with_clicks:
        n_B += _clicks(n, sample_rate, rms(base), seed, c, split)
    return Waveform(n_A, sample_rate), Waveform(n_B, sample_rate)


def _clicks(n, sample_rate, base_rms, seed, c: SimConstants, split) -> np.ndarray:
    rng = _rng(seed, _STREAM_CLICKS, split)
    out = np.zeros(n)
    width = max(int(sample_rate * c.click_ms / 1000.0), 1)
    count = rng.poisson(c.click_rate_hz * n / sample_rate)
    if count == 0:
        return out
    starts = np.sort(rng.integers(0, max(n - width, 1), size=count))
    # in-burst power such that the time-averaged click power hits click_level_db
    duty = count * width / n
    burst_rms = base_rms * 10.0 ** (c.click_level_db / 20.0) / np.sqrt(duty)
    decay = np.exp(-np.arange(width) / (0.3 * width))
    shape = decay / np.sqrt(np.mean(decay**2))
    for s in starts:
        out[s : s + width] += burst_rms * shape * rng.standard_normal(width)
    return out


def mix_at_snr(x, n, snr_db: float):
    """Add `n` to `x` at broadband SNR `snr_db`; returns ``(y, gain)``.

    The gain applied to the noise should be reused for the other channel.
    """
    xs = np.asarray(getattr(x, "samples", x), dtype=np.float64)
    ns = np.asarray(getattr(n, "samples", n), dtype=np.float64)
    if xs.shape != ns.shape:
        raise ValueError(f"length mismatch: {xs.shape} vs {ns.shape}")
    ex, en = float(np.sum(xs**2)), float(np.sum(ns**2))
    if ex == 0.0 or en == 0.0:
        raise ValueError("signal and noise must both have nonzero energy")
    gain = np.sqrt(ex / (en * 10.0 ** (snr_db / 10.0)))
    y = xs + gain * ns
    if isinstance(x, Waveform):
        return Waveform(y, x.sample_rate), gain
    return y, gain


@dataclass(frozen=True)
class ScenarioPair:
    """Clean and (already scaled) noise components of both channels."""

    clean_a: Waveform
    clean_b: Waveform
    noise_a: Waveform
    noise_b: Waveform
    rtf: np.ndarray
    snr_db: float
    seed: int
    speed_class: SpeedClass = SpeedClass.LOW

    @property
    def sample_rate(self) -> int:
        return self.clean_a.sample_rate

    @property
    def noisy_a(self) -> Waveform:
        return Waveform(self.clean_a.samples + self.noise_a.samples, self.sample_rate)

    @property
    def noisy_b(self) -> Waveform:
        return Waveform(self.clean_b.samples + self.noise_b.samples, self.sample_rate)


def build_scenario(speech: Waveform | None = None, speed_class=SpeedClass.LOW,
                   snr_db: float = 0.0, seed: int = 0,
                   constants: SimConstants = DEFAULT_CONSTANTS,
                   stft: StftConfig | None = None) -> ScenarioPair:
    """Compose one test scenario.

    `speech` replaces the synthetic surrogate when given (e.g. a WAV
    file); it is cropped or used whole, and must be sampled at 16 kHz.
    """
    if speech is None:
        speech = synth_speech(constants.duration_s, SAMPLE_RATE, seed, constants)
    x_B, rtf = contact_transform(speech, stft, constants)
    duration = len(speech) / speech.sample_rate
    n_A, n_B = synth_wind_pair(duration, speech.sample_rate, speed_class, seed, constants)
    if len(n_A) != len(speech):
        # rounding of the duration
        n_A = Waveform(np.resize(n_A.samples, len(speech)), speech.sample_rate)
        n_B = Waveform(np.resize(n_B.samples, len(speech)), speech.sample_rate)
    _, gain = mix_at_snr(speech, n_A, snr_db)
    return ScenarioPair(
        clean_a=speech,
        clean_b=x_B,
        noise_a=Waveform(gain * n_A.samples, speech.sample_rate),
        noise_b=Waveform(gain * n_B.samples, speech.sample_rate),
        rtf=rtf,
        snr_db=float(snr_db),
        seed=int(seed),
        speed_class=SpeedClass(speed_class),
    )


def with_duration(constants: SimConstants, duration_s: float) -> SimConstants:
    return replace(constants, duration_s=duration_s)
