"""End-to-end glue: dictionary training material, per-scenario enhancement
with shared input normalization, and the SNR / sparsity-weight experiments."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines, fusion
from .config import RunConfig
from .dictionary_learning import Dictionary, DictKind, TrainConfig, train_dictionary
from .metrics import MetricReport, _raw_scores, evaluate_condition, score
from .simulate import (
    SpeedClass,
    Split,
    build_scenario,
    rms,
    synth_speech,
    synth_wind_pair,
)
from .stft import Spectrogram, StftConfig, Waveform, analyze, synthesize

__all__ = [
    "ALGORITHMS",
    "DICTIONARY_ALGORITHMS",
    "Prepared",
    "training_material",
    "train_all",
    "prepare",
    "run_algorithm",
    "enhance_waveform",
    "to_waveform",
    "speed_class_for",
    "scenario_grid",
    "run_experiment",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("fused", "acoustic_only", "contact_only", "mvdr", "color_correction")
DICTIONARY_ALGORITHMS = ("fused", "acoustic_only", "contact_only")
NOISY = "noisy"


def _unit_rms(w: Waveform) -> Waveform:
    r = rms(w)
    if r == 0:
        raise ValueError("training audio is silent")
    return Waveform(w.samples / r, w.sample_rate)


def training_material(cfg: RunConfig, speech: list[Waveform] | None = None):
    """Training spectrograms for the speech and both noise dictionaries.

    Each waveform is scaled to unit RMS before the STFT. Wind material is
    split evenly between the two speed classes and drawn from the training
    seed stream, which is disjoint from the test scenarios.
    """
    stft = StftConfig.for_rate(16000, cfg.frame_ms)
    if speech is None:
        speech = [synth_speech(cfg.train.speech_s, 16000, cfg.train.seed, split=Split.TRAIN)]
    speech_total = sum(len(w) / w.sample_rate for w in speech)
    if speech_total < 1.0:
        raise ValueError(f"need at least 1 s of training speech, got {speech_total:.2f} s")
    S_x = np.hstack([analyze(_unit_rms(w), stft).data for w in speech])
    parts_a, parts_b = [], []
    for k, speed in enumerate((SpeedClass.LOW, SpeedClass.HIGH)):
        n_a, n_b = synth_wind_pair(cfg.train.noise_s / 2, 16000, speed, cfg.train.seed + k,
                                   split=Split.TRAIN)
        parts_a.append(analyze(_unit_rms(n_a), stft).data)
        parts_b.append(analyze(_unit_rms(n_b), stft).data)
    return {
        DictKind.SPEECH_ACOUSTIC: S_x,
        DictKind.NOISE_ACOUSTIC: np.hstack(parts_a),
        DictKind.NOISE_CONTACT: np.hstack(parts_b),
    }


def train_all(cfg: RunConfig, speech: list[Waveform] | None = None) -> dict[DictKind, Dictionary]:
    material = training_material(cfg, speech)
    out = {}
    for kind, S in material.items():
        tc = TrainConfig(
            num_atoms=cfg.train.num_atoms,
            lam=cfg.train.lam,
            n_outer=cfg.train.n_outer,
            n_inner=cfg.train.n_inner,
            seed=cfg.train.seed + 17 * int(kind),
        )
        log.info("training %s dictionary on %d frames", kind.name, S.shape[1])
        out[kind] = train_dictionary(S, tc, kind)
    return out


@dataclass
class Prepared:
    """Normalized spectrograms and classical estimates of one scenario."""

    Y_A: np.ndarray
    Y_B: np.ndarray
    scale: float
    stft: StftConfig
    sample_rate: int
    length: int
    mask: np.ndarray
    H0: np.ndarray
    phi_n: baselines.SpatialCovariance
    extras: dict = field(default_factory=dict)


def prepare(noisy_a: Waveform, noisy_b: Waveform, stft: StftConfig | None = None) -> Prepared:
    """STFT both channels, scale by the acoustic RMS, run VAD, CW and noise covariance.

    The VAD runs on the contact channel: its wind pickup is far weaker, so
    its frame energies track speech activity much more reliably.
    """
    stft = stft or StftConfig.for_rate(noisy_a.sample_rate)
    scale = rms(noisy_a)
    if scale == 0:
        raise ValueError("acoustic channel is silent")
    Y_A = analyze(noisy_a, stft).data / scale
    Y_B = analyze(noisy_b, stft).data / scale
    mask = baselines.energy_vad(Y_B)
    H0 = baselines.cw_rtf(Y_A, Y_B, mask)
    phi_n = baselines.estimate_noise_covariance(Y_A, Y_B, mask)
    return Prepared(Y_A, Y_B, scale, stft, noisy_a.sample_rate, len(noisy_a), mask, H0, phi_n)


def run_algorithm(name: str, prep: Prepared, dicts=None, *, eta=0.4, lam=None,
                  n_outer=5, n_inner=1000):
    """Enhanced (normalized) acoustic spectrogram and a JSON-friendly report."""
    if name in DICTIONARY_ALGORITHMS:
        missing = [k.name for k in DictKind if not dicts or k not in dicts]
        if missing:
            raise ValueError(f"algorithm {name!r} needs dictionaries: missing {missing}")
        d_ax = dicts[DictKind.SPEECH_ACOUSTIC]
        d_an = dicts[DictKind.NOISE_ACOUSTIC]
        d_bn = dicts[DictKind.NOISE_CONTACT]
    report: dict = {"algorithm": name}
    if name == "fused":
        rep = fusion.enhance_fused(prep.Y_A, prep.Y_B, d_ax, d_an, d_bn, eta, lam, n_outer,
                                   n_inner, prep.H0)
        X = rep.x_hat
        report.update(_report_fields(rep))
    elif name == "acoustic_only":
        rep = fusion.enhance_acoustic_only(prep.Y_A, d_ax, d_an, lam, n_inner, return_report=True)
        X = rep.x_hat
        report.update(_report_fields(rep))
    elif name == "contact_only":
        rep = fusion.enhance_contact_only(prep.Y_B, d_ax, d_bn, lam, n_outer, n_inner, prep.H0)
        X = rep.x_hat
        report.update(_report_fields(rep))
    elif name == "mvdr":
        X = baselines.mvdr_enhance(prep.Y_A, prep.Y_B, prep.phi_n, prep.H0)
        report["rtf"] = _complex_list(prep.H0)
    elif name == "color_correction":
        X = baselines.color_correction(prep.Y_B, prep.H0)
        report["rtf"] = _complex_list(prep.H0)
    elif name == NOISY:
        X = prep.Y_A.copy()
    else:
        raise ValueError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")
    return X, report


def _complex_list(h) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(h)]


def _report_fields(rep: fusion.EnhanceReport) -> dict:
    return {
        "rtf": _complex_list(rep.rtf),
        "cost_history": [
            {"j_rec": c.j_rec, "j_spa": c.j_spa, "total": c.total} for c in rep.history
        ],
        "zero_fraction": rep.sparsity,
    }


def to_waveform(X: np.ndarray, prep: Prepared) -> Waveform:
    """Undo the input scaling, resynthesize and align to the input length."""
    w = synthesize(Spectrogram(X * prep.scale, prep.stft, prep.sample_rate)).samples
    if w.shape[0] < prep.length:
        w = np.concatenate([w, np.zeros(prep.length - w.shape[0])])
    return Waveform(w[: prep.length], prep.sample_rate)


def enhance_waveform(noisy_a, noisy_b, algorithm, dicts=None, **settings):
    prep = prepare(noisy_a, noisy_b)
    X, report = run_algorithm(algorithm, prep, dicts, **settings)
    return to_waveform(X, prep), report


def speed_class_for(index: int) -> SpeedClass:
    """Alternate wind classes across the utterances of one condition."""
    return SpeedClass.LOW if index % 2 == 0 else SpeedClass.HIGH


def scenario_seed(base: int, snr_index: int, utterance: int) -> int:
    return base + 1000 * snr_index + utterance


def scenario_grid(cfg: RunConfig):
    """Yield ``(snr_db, utterance, scenario)`` for the configured test set."""
    from .simulate import SimConstants

    constants = SimConstants(duration_s=cfg.sim.duration_s)
    for i, snr in enumerate(cfg.sim.snrs):
        for u in range(cfg.sim.utterances):
            seed = scenario_seed(cfg.sim.seed, i, u)
            yield snr, u, build_scenario(None, speed_class_for(u), snr, seed, constants)


def _algorithm_settings(cfg: RunConfig, lam_scale: float = 1.0, num_bins: int = 257) -> dict:
    base = cfg.enhance.lam if cfg.enhance.lam is not None else fusion.default_lambda(num_bins)
    return dict(eta=cfg.enhance.eta, lam=base * lam_scale, n_outer=cfg.enhance.n_outer,
                n_inner=cfg.enhance.n_inner)


def label(algorithm: str, lam_scale: float | None) -> str:
    return algorithm if lam_scale is None else f"{algorithm}@lam_x{lam_scale:g}"


def _scenario_job(args):
    snr, scenario, algorithms, lam_scales, dicts, cfg = args
    prep = prepare(scenario.noisy_a, scenario.noisy_b, StftConfig.for_rate(16000, cfg.frame_ms))
    ref = scenario.clean_a
    noisy_scores = _raw_scores(ref, scenario.noisy_a, ref.sample_rate)
    records = []
    for lam_scale in lam_scales:
        settings = _algorithm_settings(cfg, 1.0 if lam_scale is None else lam_scale,
                                       prep.stft.num_bins)
        for name in algorithms:
            if lam_scale is not None and name not in DICTIONARY_ALGORITHMS:
                continue
            X, _ = run_algorithm(name, prep, dicts, **settings)
            est = to_waveform(X, prep)
            records.append((snr, label(name, lam_scale),
                            score(ref, est, scenario.noisy_a, noisy_scores=noisy_scores)))
    return records


def run_experiment(cfg: RunConfig, dicts, algorithms=ALGORITHMS, lam_scales=(None,),
                   scenarios=None, progress=None):
    """Score every algorithm on every scenario and aggregate per SNR.

    `lam_scales` of ``(None,)`` runs each algorithm once at the configured
    sparsity weight; numeric entries run the dictionary algorithms at that
    multiple and label them ``name@lam_x<scale>``.

    Returns ``(rows, records)``.
    """
    if scenarios is None:
        scenarios = [(snr, sc) for snr, _, sc in scenario_grid(cfg)]
    jobs = [(snr, sc, tuple(algorithms), tuple(lam_scales), dicts, cfg) for snr, sc in scenarios]
    workers = cfg.effective_workers()
    records: list[tuple[float, str, MetricReport]] = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, recs in enumerate(pool.map(_scenario_job, jobs)):
                records.extend(recs)
                if progress:
                    progress(i + 1, len(jobs))
    else:
        for i, job in enumerate(jobs):
            records.extend(_scenario_job(job))
            if progress:
                progress(i + 1, len(jobs))
    return evaluate_condition(records), records
