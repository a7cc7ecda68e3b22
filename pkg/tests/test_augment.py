import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accent_asr.audio import AudioClip
from accent_asr.augment import (
    AugmentSpec, AugmentSyntaxError, RangeOrderError, UnknownKind, apply_augmentations, fires,
    parse_augment_spec,
)


def sine(amplitude=0.5, n=16000):
    return AudioClip(amplitude * np.sin(2 * np.pi * 440 * np.arange(n) / 16000), 16000)


def test_parse_examples():
    assert parse_augment_spec("gain[p=0.5,db=-6:0]") == AugmentSpec("gain", 0.5, -6.0, 0.0)
    tempo = parse_augment_spec("tempo[rate=0.9:1.1]")
    assert tempo.probability == 1.0 and (tempo.low, tempo.high) == (0.9, 1.1)
    assert parse_augment_spec("noise") == AugmentSpec("noise", 1.0, 10.0, 30.0)
    assert parse_augment_spec(" gain [ db = -3 ] ") == AugmentSpec("gain", 1.0, -3.0, -3.0)


@pytest.mark.parametrize("text,error", [
    ("warp[p=0.5]", UnknownKind),
    ("gain[p=0.5", AugmentSyntaxError),
    ("gain[p=x]", AugmentSyntaxError),
    ("gain[snr=1:2]", AugmentSyntaxError),
    ("gain[db]", AugmentSyntaxError),
    ("gain[db=0:-6]", RangeOrderError),
    ("gain[p=1.5]", RangeOrderError),
    ("tempo[rate=0:1]", RangeOrderError),
])
def test_parse_errors(text, error):
    with pytest.raises(error):
        parse_augment_spec(text)


def test_spec_string_round_trips():
    spec = parse_augment_spec("noise[p=0.25,snr=5:15]")
    assert parse_augment_spec(str(spec)) == spec


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(0, 10 ** 6))
def test_zero_probability_is_identity(seed, index):
    clip = sine()
    specs = [parse_augment_spec(s) for s in ("gain[p=0]", "noise[p=0]", "tempo[p=0]")]
    assert apply_augmentations(clip, specs, seed, index) is clip


def test_fixed_gain():
    out = apply_augmentations(sine(), [parse_augment_spec("gain[p=1,db=-6:-6]")], 0, 0)
    assert np.max(np.abs(out.samples)) == pytest.approx(0.5 * 10 ** (-6 / 20), abs=1e-4)
    assert np.max(np.abs(out.samples)) == pytest.approx(0.2506, abs=1e-4)


def test_gain_clamps():
    out = apply_augmentations(sine(0.9), [parse_augment_spec("gain[db=12]")], 0, 0)
    assert np.max(out.samples) == 1.0 and np.min(out.samples) == -1.0


def test_noise_hits_requested_snr():
    clip = sine(0.3, 64000)
    out = apply_augmentations(clip, [parse_augment_spec("noise[snr=20]")], 1, 2)
    noise = out.samples - clip.samples
    snr = 10 * np.log10(np.mean(clip.samples ** 2) / np.mean(noise ** 2))
    assert snr == pytest.approx(20, abs=0.2)


def test_noise_on_silence_is_identity():
    clip = AudioClip(np.zeros(100), 16000)
    assert apply_augmentations(clip, [parse_augment_spec("noise")], 1, 2) is clip


@pytest.mark.parametrize("rate", [0.8, 1.25])
def test_tempo_changes_duration(rate):
    clip = sine(n=16000)
    out = apply_augmentations(clip, [parse_augment_spec(f"tempo[rate={rate}]")], 0, 0)
    assert out.sample_rate_hz == 16000
    assert abs(len(out) - 16000 / rate) <= 2
    spectrum = np.abs(np.fft.rfft(out.samples))
    # playing faster raises the pitch by the same factor
    peak_hz = np.argmax(spectrum) * 16000 / len(out)
    assert peak_hz == pytest.approx(440 * rate, rel=0.01)


def test_determinism_and_key_dependence():
    specs = [parse_augment_spec(s) for s in
             ("gain[p=0.5,db=-6:0]", "noise[p=0.5]", "tempo[p=0.5]")]
    clip = sine()
    a = apply_augmentations(clip, specs, 7, 11)
    b = apply_augmentations(clip, specs, 7, 11)
    assert a.samples.tobytes() == b.samples.tobytes()
    outputs = {apply_augmentations(clip, specs, 7, i).samples.tobytes() for i in range(12)}
    assert len(outputs) > 4


def test_firing_rate():
    spec = AugmentSpec("gain", 0.3, 0.0, 0.0)
    hits = sum(fires(spec, 42, i, 0) for i in range(10000))
    assert 0.28 <= hits / 10000 <= 0.32


def test_positions_draw_independently():
    spec = AugmentSpec("gain", 0.5, 0.0, 0.0)
    first = [fires(spec, 3, i, 0) for i in range(2000)]
    second = [fires(spec, 3, i, 1) for i in range(2000)]
    agreement = np.mean(np.array(first) == np.array(second))
    assert 0.45 < agreement < 0.55


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.floats(0.1, 1.0))
def test_output_is_valid_clip(index, amplitude):
    specs = [parse_augment_spec(s) for s in ("gain[db=-6:20]", "noise[snr=0:5]", "tempo")]
    out = apply_augmentations(sine(amplitude, 4000), specs, 5, index)
    assert np.all(np.abs(out.samples) <= 1.0) and out.sample_rate_hz == 16000
