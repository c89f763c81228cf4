import numpy as np
import pytest
from conftest import crandn

from windfuse.dictionary_learning import Dictionary, DictKind
from windfuse.io import (
    FormatError,
    dictionary_bytes,
    fnv1a_64,
    load_dictionary,
    parse_config_text,
    read_wav,
    save_dictionary,
    write_wav,
)
from windfuse.stft import Waveform


def test_wav_round_trip(tmp_path, rng):
    x = np.round(rng.uniform(-0.9, 0.9, 1000) * 32768) / 32768
    path = tmp_path / "a.wav"
    assert write_wav(path, Waveform(x, 16000)) == 0
    w = read_wav(path)
    assert w.sample_rate == 16000
    np.testing.assert_array_equal(w.samples, x)


def test_wav_clipping_counted(tmp_path):
    path = tmp_path / "c.wav"
    assert write_wav(path, Waveform(np.array([0.0, 1.5, -2.0, 0.5]), 8000)) == 2
    np.testing.assert_allclose(read_wav(path).samples, [0.0, 32767 / 32768, -1.0, 0.5])


def test_fnv_known_values():
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C


def test_dictionary_round_trip(tmp_path, rng):
    d = Dictionary(crandn(rng, 7, 5), DictKind.NOISE_ACOUSTIC)
    path = tmp_path / "d.wfd"
    save_dictionary(path, d)
    back = load_dictionary(path)
    assert back.kind is DictKind.NOISE_ACOUSTIC
    np.testing.assert_array_equal(back.atoms, d.atoms)
    assert dictionary_bytes(back) == path.read_bytes()


@pytest.mark.parametrize("damage", ["magic", "version", "truncate", "flip"])
def test_dictionary_corruption(tmp_path, rng, damage):
    blob = bytearray(dictionary_bytes(Dictionary(crandn(rng, 4, 3), DictKind.SPEECH_ACOUSTIC)))
    if damage == "magic":
        blob[0:4] = b"XXXX"
    elif damage == "version":
        blob[4] = 9
    elif damage == "truncate":
        blob = blob[:-20]
    else:
        blob[30] ^= 1
    path = tmp_path / "bad.wfd"
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        load_dictionary(path)


def test_config_parsing():
    text = "# comment\n train.num_atoms = 50  # inline\n\nsim.snrs=-10, 0\n"
    assert parse_config_text(text) == {"train.num_atoms": "50", "sim.snrs": "-10, 0"}
    with pytest.raises(FormatError):
        parse_config_text("a = 1\na = 2")
    with pytest.raises(FormatError):
        parse_config_text("just words")
    with pytest.raises(FormatError):
        parse_config_text(" = 3")
