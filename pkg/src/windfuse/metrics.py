"""Objective metrics: SI-SDR, STOI and log-spectral distance, plus
per-condition aggregation with improvements over the noisy input."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.signal import resample_poly

from .stft import StftConfig, Waveform, analyze

__all__ = [
    "MetricReport",
    "si_sdr",
    "stoi",
    "log_spectral_distance",
    "score",
    "evaluate_condition",
    "write_metrics_csv",
    "CSV_HEADER",
]

SI_SDR_CAP_DB = 100.0
LSD_EPS = 1e-10
CSV_HEADER = ("condition_snr_db", "algorithm", "metric", "mean", "std")
METRICS = ("si_sdr", "stoi", "lsd")

# STOI constants (Taal et al. definition)
STOI_FS = 10000
STOI_FRAME = 256
STOI_NFFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEGMENT = 30
STOI_BETA_DB = -15.0
STOI_DYN_RANGE_DB = 40.0


def _samples(x) -> np.ndarray:
    return np.asarray(getattr(x, "samples", x), dtype=np.float64)


def align(est, length: int) -> np.ndarray:
    """Truncate or zero-pad `est` to `length` samples."""
    est = _samples(est)
    if est.shape[0] >= length:
        return est[:length]
    return np.concatenate([est, np.zeros(length - est.shape[0])])


def si_sdr(ref, est) -> float:
    """Scale-invariant SDR in dB, capped at +100 dB."""
    ref, est = _samples(ref), _samples(est)
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch: {ref.shape} vs {est.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise ValueError("reference signal is all zeros")
    alpha = float(np.dot(est, ref)) / ref_energy
    target = alpha * ref
    err = est - target
    num, den = float(np.dot(target, target)), float(np.dot(err, err))
    if num == 0.0:
        return -SI_SDR_CAP_DB
    if den == 0.0:
        return SI_SDR_CAP_DB
    return float(np.clip(10.0 * np.log10(num / den), -SI_SDR_CAP_DB, SI_SDR_CAP_DB))


# --- STOI -----------------------------------------------------------------

def _stoi_window() -> np.ndarray:
    return np.hanning(STOI_FRAME + 2)[1:-1]


def _third_octave_matrix():
    f = np.linspace(0, STOI_FS, STOI_NFFT + 1)[: STOI_NFFT // 2 + 1]
    k = np.arange(STOI_BANDS, dtype=np.float64)
    centers = 2.0 ** (k / 3.0) * STOI_MIN_FREQ
    lo_edges = STOI_MIN_FREQ * 2.0 ** ((2 * k - 1) / 6.0)
    hi_edges = STOI_MIN_FREQ * 2.0 ** ((2 * k + 1) / 6.0)
    obm = np.zeros((STOI_BANDS, f.shape[0]))
    for i in range(STOI_BANDS):
        lo = int(np.argmin((f - lo_edges[i]) ** 2))
        hi = int(np.argmin((f - hi_edges[i]) ** 2))
        obm[i, lo:hi] = 1.0
    return obm, centers


def _frames(x: np.ndarray, window: np.ndarray, hop: int) -> np.ndarray:
    n = window.shape[0]
    count = (x.shape[0] - n) // hop + 1
    idx = np.arange(n)[None, :] + hop * np.arange(count)[:, None]
    return x[idx] * window[None, :]


def _remove_silent_frames(x, y):
    """Drop frames more than 40 dB below the loudest reference frame and
    overlap-add the rest back into signals."""
    window = _stoi_window()
    hop = STOI_FRAME // 2
    xf, yf = _frames(x, window, hop), _frames(y, window, hop)
    energy = 20.0 * np.log10(np.linalg.norm(xf, axis=1) + np.finfo(float).eps)
    keep = energy > energy.max() - STOI_DYN_RANGE_DB
    xf, yf = xf[keep], yf[keep]
    count = xf.shape[0]
    length = (count - 1) * hop + STOI_FRAME
    xs, ys = np.zeros(length), np.zeros(length)
    for i in range(count):
        xs[i * hop : i * hop + STOI_FRAME] += xf[i]
        ys[i * hop : i * hop + STOI_FRAME] += yf[i]
    return xs, ys


def _band_envelopes(x: np.ndarray, obm: np.ndarray) -> np.ndarray:
    spec = np.fft.rfft(_frames(x, _stoi_window(), STOI_FRAME // 2), n=STOI_NFFT, axis=1)
    return np.sqrt(obm @ (np.abs(spec) ** 2).T)  # bands x frames


def stoi(ref, est, sample_rate: int = 16000) -> float:
    """Short-time objective intelligibility of `est` against `ref`.

    Both signals are resampled to 10 kHz, silent reference frames are
    removed, and 384 ms segments of one-third-octave band envelopes are
    compared by clipped, normalized correlation.
    """
    ref, est = _samples(ref), _samples(est)
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch: {ref.shape} vs {est.shape}")
    if ref.shape[0] < sample_rate:
        raise ValueError("STOI needs at least one second of signal")
    if sample_rate != STOI_FS:
        g = np.gcd(int(sample_rate), STOI_FS)
        # Kaiser-windowed sinc polyphase filter (scipy default, beta = 5)
        ref = resample_poly(ref, STOI_FS // g, int(sample_rate) // g)
        est = resample_poly(est, STOI_FS // g, int(sample_rate) // g)
    ref, est = _remove_silent_frames(ref, est)
    obm, _ = _third_octave_matrix()
    X, Y = _band_envelopes(ref, obm), _band_envelopes(est, obm)
    n_frames = X.shape[1]
    if n_frames < STOI_SEGMENT:
        raise ValueError("not enough non-silent frames for STOI")
    clip = 10.0 ** (-STOI_BETA_DB / 20.0)
    scores = []
    for m in range(STOI_SEGMENT, n_frames + 1):
        xs = X[:, m - STOI_SEGMENT : m]
        ys = Y[:, m - STOI_SEGMENT : m]
        alpha = np.linalg.norm(xs, axis=1, keepdims=True) / (
            np.linalg.norm(ys, axis=1, keepdims=True) + np.finfo(float).eps
        )
        yc = np.minimum(alpha * ys, xs * (1.0 + clip))
        xc = xs - xs.mean(axis=1, keepdims=True)
        yc = yc - yc.mean(axis=1, keepdims=True)
        xc /= np.linalg.norm(xc, axis=1, keepdims=True) + np.finfo(float).eps
        yc /= np.linalg.norm(yc, axis=1, keepdims=True) + np.finfo(float).eps
        scores.append(np.sum(xc * yc, axis=1))
    return float(np.clip(np.mean(scores), 0.0, 1.0))


def log_spectral_distance(ref, est, cfg: StftConfig | None = None, sample_rate: int = 16000) -> float:
    """RMS over all bins and frames of the dB difference of STFT magnitudes."""
    ref, est = _samples(ref), _samples(est)
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch: {ref.shape} vs {est.shape}")
    cfg = cfg or StftConfig.for_rate(sample_rate)
    R = np.abs(analyze(Waveform(ref, sample_rate), cfg).data)
    E = np.abs(analyze(Waveform(est, sample_rate), cfg).data)
    diff = 20.0 * (np.log10(R + LSD_EPS) - np.log10(E + LSD_EPS))
    return float(np.sqrt(np.mean(diff**2)))


# --- aggregation ------------------------------------------------------------

@dataclass(frozen=True)
class MetricReport:
    si_sdr_db: float
    stoi: float
    lsd_db: float
    delta_si_sdr_db: float = 0.0
    delta_stoi: float = 0.0
    delta_lsd_db: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {
            "si_sdr": self.si_sdr_db,
            "stoi": self.stoi,
            "lsd": self.lsd_db,
            "delta_si_sdr": self.delta_si_sdr_db,
            "delta_stoi": self.delta_stoi,
            "delta_lsd": self.delta_lsd_db,
        }


def _raw_scores(ref, est, sample_rate) -> tuple[float, float, float]:
    est = align(est, _samples(ref).shape[0])
    return (
        si_sdr(ref, est),
        stoi(ref, est, sample_rate),
        log_spectral_distance(ref, est, sample_rate=sample_rate),
    )


def score(ref, est, noisy, sample_rate: int = 16000, noisy_scores=None) -> MetricReport:
    """Metrics of `est` and their improvement over `noisy`, both against `ref`."""
    e = _raw_scores(ref, est, sample_rate)
    n = noisy_scores if noisy_scores is not None else _raw_scores(ref, noisy, sample_rate)
    return MetricReport(e[0], e[1], e[2], e[0] - n[0], e[1] - n[1], e[2] - n[2])


def evaluate_condition(records) -> list[dict]:
    """Aggregate per-utterance results into mean/std per SNR and algorithm.

    Parameters
    ----------
    records : iterable of (snr_db, algorithm, MetricReport)

    Returns
    -------
    list of dict rows with the keys of `CSV_HEADER`, sorted by SNR,
    algorithm and metric.
    """
    groups: dict[tuple[float, str], list[MetricReport]] = defaultdict(list)
    for snr_db, algorithm, report in records:
        if not isinstance(report, MetricReport):
            raise TypeError("records must hold MetricReport instances")
        groups[(float(snr_db), str(algorithm))].append(report)
    if not groups:
        raise ValueError("no records to aggregate")
    counts = defaultdict(set)
    for (snr_db, algorithm), reports in groups.items():
        counts[snr_db].add(len(reports))
    for snr_db, sizes in counts.items():
        if len(sizes) != 1:
            raise ValueError(
                f"algorithms at {snr_db} dB were evaluated on different numbers of utterances"
            )
    rows = []
    for (snr_db, algorithm) in sorted(groups):
        reports = groups[(snr_db, algorithm)]
        values = defaultdict(list)
        for r in reports:
            for k, v in r.as_dict().items():
                values[k].append(v)
        for metric in sorted(values):
            arr = np.asarray(values[metric])
            rows.append(
                {
                    "condition_snr_db": snr_db,
                    "algorithm": algorithm,
                    "metric": metric,
                    "mean": float(arr.mean()),
                    "std": float(arr.std()),
                }
            )
    return rows


def write_metrics_csv(rows, path=None) -> str:
    """Serialize aggregated rows; returns the CSV text and writes it if `path` is given."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow(
            [
                f"{r['condition_snr_db']:g}",
                r["algorithm"],
                r["metric"],
                f"{r['mean']:.6f}",
                f"{r['std']:.6f}",
            ]
        )
    text = buf.getvalue()
    if path is not None:
        from .io import atomic_write_text

        atomic_write_text(path, text)
    return text
