import numpy as np
import pytest

from windfuse.metrics import (
    CSV_HEADER,
    MetricReport,
    evaluate_condition,
    log_spectral_distance,
    score,
    si_sdr,
    stoi,
    write_metrics_csv,
)
from windfuse.simulate import synth_speech
from windfuse.stft import StftConfig, Waveform, analyze

SR = 16000


@pytest.fixture(scope="module")
def clean():
    return synth_speech(3.0, SR, seed=11).samples


@pytest.fixture(scope="module")
def white():
    return np.random.default_rng(2).standard_normal(3 * SR)


# --- SI-SDR -----------------------------------------------------------------

def test_si_sdr_cap_and_scale(clean):
    assert si_sdr(clean, clean) == 100.0
    assert si_sdr(clean, 2.0 * clean) == 100.0
    assert si_sdr(clean, np.zeros_like(clean)) == -100.0


def test_si_sdr_orthogonal_noise_is_zero_db():
    ref = np.array([1.0, 0.0, 1.0, 0.0])
    noise = np.array([0.0, 1.0, 0.0, 1.0])
    assert si_sdr(ref, ref + noise) == pytest.approx(0.0, abs=1e-12)


def test_si_sdr_scale_invariant(clean, white):
    est = clean + 0.3 * white
    assert si_sdr(clean, 7.0 * est) == pytest.approx(si_sdr(clean, est), abs=1e-9)


def test_si_sdr_errors(clean):
    with pytest.raises(ValueError):
        si_sdr(np.zeros(10), np.ones(10))
    with pytest.raises(ValueError):
        si_sdr(clean, clean[:-1])


# --- STOI -------------------------------------------------------------------

def test_stoi_identity_and_gain(clean):
    assert stoi(clean, clean) >= 0.999
    assert stoi(clean, 0.5 * clean) >= 0.999


# The standard clipping step bounds the noise envelope by a multiple of the
# reference envelope, so against the surrogate's deep pauses independent
# noise still scores about 0.5-0.6 (the reference implementation agrees).
@pytest.mark.xfail(strict=True, reason="clipping makes noise track surrogate pauses")
def test_stoi_noise_is_low(clean, white):
    assert stoi(clean, white) < 0.3


def test_stoi_noise_far_below_noisy_speech(clean, white):
    assert stoi(clean, white) < stoi(clean, clean + 3.0 * white) - 0.1


def test_stoi_monotone_in_noise(clean, white):
    values = [stoi(clean, clean + g * white) for g in (0.1, 1.0, 3.0)]
    assert values[0] > values[1] > values[2]


def test_stoi_matches_reference_implementation(clean, white):
    pystoi = pytest.importorskip("pystoi")
    for g in (0.3, 1.0):
        est = clean + g * white
        assert stoi(clean, est) == pytest.approx(pystoi.stoi(clean, est, SR), abs=0.02)


def test_stoi_short_input():
    with pytest.raises(ValueError):
        stoi(np.ones(SR // 2), np.ones(SR // 2))


# --- LSD --------------------------------------------------------------------

def test_lsd_identity_and_gain(clean, white):
    assert log_spectral_distance(clean, clean) == 0.0
    # a factor of 10 in amplitude is 20 dB in every bin well above epsilon
    assert log_spectral_distance(white, 10 * white) == pytest.approx(20.0, abs=1e-6)


def test_lsd_naive_loop(rng):
    ref, est = rng.standard_normal(4000), rng.standard_normal(4000)
    cfg = StftConfig.for_rate(SR)
    R = analyze(Waveform(ref, SR), cfg).data
    E = analyze(Waveform(est, SR), cfg).data
    acc, count = 0.0, 0
    for f in range(R.shape[0]):
        for t in range(R.shape[1]):
            d = 20 * np.log10(abs(R[f, t]) + 1e-10) - 20 * np.log10(abs(E[f, t]) + 1e-10)
            acc += d * d
            count += 1
    assert log_spectral_distance(ref, est) == pytest.approx(np.sqrt(acc / count), rel=1e-9)
    assert log_spectral_distance(est, ref) == pytest.approx(log_spectral_distance(ref, est))


# --- aggregation ------------------------------------------------------------

def test_score_of_noisy_has_zero_deltas(clean, white):
    noisy = clean + white
    r = score(clean, noisy, noisy)
    assert (r.delta_si_sdr_db, r.delta_stoi, r.delta_lsd_db) == (0.0, 0.0, 0.0)


def test_score_pads_short_estimates(clean):
    r = score(clean, clean[:-100], clean)
    assert r.si_sdr_db > 30


def test_single_scenario_has_zero_std():
    rows = evaluate_condition([(-5, "fused", MetricReport(1.0, 0.5, 3.0, 0.1, 0.2, -0.3))])
    assert len(rows) == 6
    assert all(r["std"] == 0.0 for r in rows)
    means = {r["metric"]: r["mean"] for r in rows}
    assert means["delta_lsd"] == -0.3 and means["stoi"] == 0.5


def test_aggregation_mean_std():
    reps = [MetricReport(v, 0.0, 0.0) for v in (1.0, 3.0)]
    rows = evaluate_condition([(0, "a", r) for r in reps])
    sdr = next(r for r in rows if r["metric"] == "si_sdr")
    assert (sdr["mean"], sdr["std"]) == (2.0, 1.0)


def test_aggregation_count_mismatch():
    r = MetricReport(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        evaluate_condition([(0, "a", r), (0, "a", r), (0, "b", r)])
    with pytest.raises(ValueError):
        evaluate_condition([])


def test_csv_layout(tmp_path):
    r = MetricReport(0.0, 0.0, 0.0)
    records = [(snr, alg, r) for snr in (-10, 5) for alg in ("fused", "mvdr")]
    path = tmp_path / "m.csv"
    text = write_metrics_csv(evaluate_condition(records), path)
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 1 + 2 * 2 * 6
    assert path.read_text() == text
    assert lines[1].startswith("-10,fused,")
