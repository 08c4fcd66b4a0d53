"""Histogram codec tests: spec examples and structural invariants."""

import math

import numpy as np
import pytest

from bnbrl.codec import HistogramCodec, decode, decode_matrix, encode, raw_bin_masses

TOY = HistogramCodec(m_bins=18, psi_min=0.5, psi_max=18.5, sigma=0.75)
DEFAULT = HistogramCodec()


def test_default_layout_matches_published_parameters():
    assert DEFAULT.m_bins == 18
    assert DEFAULT.psi_min == -1.0
    assert DEFAULT.psi_max == 16.0
    assert DEFAULT.sigma == 0.75
    assert DEFAULT.bin_width == pytest.approx(17.0 / 18.0)
    centers = DEFAULT.bin_centers
    assert len(centers) == 18
    assert centers[0] == pytest.approx(-1.0 + 0.5 * 17.0 / 18.0)


def test_encode_normalization_for_many_values():
    rng = np.random.default_rng(0)
    values = list(-np.exp(rng.uniform(-25, 30, size=400))) + [0.0, -1e-300]
    for v in values:
        p = encode(DEFAULT, float(v))
        assert abs(p.sum() - 1.0) <= 1e-9
        assert (p >= 0).all()


def test_encode_rejects_positive():
    with pytest.raises(ValueError):
        encode(DEFAULT, 0.5)


def test_encode_zero_clamps_to_support_floor():
    p = encode(DEFAULT, 0.0)
    # mass concentrated in the first bins
    assert p[:3].sum() > 0.9
    assert np.argmax(p) == 0


def test_toy_codec_gaussian_mass():
    """The first-bin mass of value -2 (u=1, the first bin's center) matches
    the plain Gaussian-CDF integral before tail folding; the same number
    appears in the folded encoding at an interior bin (value -4, u=2)."""
    expected = 0.5 * (math.erf((0.5 / 0.75) / math.sqrt(2))
                      - math.erf((-0.5 / 0.75) / math.sqrt(2)))
    assert expected == pytest.approx(0.495, abs=5e-4)
    raw = raw_bin_masses(TOY, -2.0)
    assert abs(raw[0] - expected) <= 1e-3
    folded_interior = encode(TOY, -4.0)
    assert abs(folded_interior[1] - expected) <= 1e-3
    # folding moves the lower tail into the first bin
    folded = encode(TOY, -2.0)
    assert folded[0] > raw[0]
    assert abs(folded.sum() - 1.0) <= 1e-12


def test_one_hot_decode_exact():
    for codec in (TOY, DEFAULT):
        for i in range(codec.m_bins):
            p = np.zeros(codec.m_bins)
            p[i] = 1.0
            assert decode(codec, p) == -(2.0 ** codec.bin_centers[i])
    p = np.zeros(18)
    p[2] = 1.0  # toy center 3
    assert decode(TOY, p) == -8.0


def test_two_center_mixture():
    p = np.zeros(18)
    p[0] = 0.5  # toy center 1 -> -2
    p[1] = 0.5  # toy center 2 -> -4
    assert decode(TOY, p) == pytest.approx(-3.0)


def test_round_trip_quantization_error():
    for v in (-2.0, -10.0, -100.0, -1000.0):
        rt = decode(DEFAULT, encode(DEFAULT, v))
        assert abs(rt - v) / abs(v) <= 0.25


def test_decode_rejects_malformed():
    with pytest.raises(ValueError):
        decode(DEFAULT, np.ones(18))  # sums to 18
    with pytest.raises(ValueError):
        decode(DEFAULT, np.full(17, 1.0 / 17.0))  # wrong length
    bad = np.full(18, 1.0 / 18.0)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        decode(DEFAULT, bad)


def test_dominance_monotonicity():
    base = encode(DEFAULT, -50.0)
    for i in range(17):
        if base[i] <= 1e-12:
            continue
        shifted = base.copy()
        moved = shifted[i] * 0.25
        shifted[i] -= moved
        shifted[i + 1] += moved
        assert decode(DEFAULT, shifted) < decode(DEFAULT, base)


def test_decode_matrix_matches_rowwise():
    rng = np.random.default_rng(1)
    raw = rng.uniform(size=(6, 18))
    probs = raw / raw.sum(axis=1, keepdims=True)
    batch = decode_matrix(DEFAULT, probs)
    for i in range(6):
        assert batch[i] == pytest.approx(decode(DEFAULT, probs[i]), abs=1e-12)


def test_codec_json_round_trip():
    doc = TOY.to_json_dict()
    again = HistogramCodec.from_json_dict(doc)
    assert again == TOY
