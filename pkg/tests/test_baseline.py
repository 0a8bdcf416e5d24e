import numpy as np
import pytest
from hypothesis import given, strategies as st

from risae import baseline
from risae.numerics import RngStream

# exact values from 2p - p^2, p = Q(sqrt(snr)), evaluated at 30 digits with mpmath
MPMATH_SER = {
    0: 0.292139018263,
    2: 0.197235316837,
    4: 0.109798884379,
    6: 0.0454849493164,
    8: 0.0119727201443,
    10: 0.00156478963695,
}


def test_mpmath_oracle_agrees():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 30
    for snr, expected in MPMATH_SER.items():
        p = mp.erfc(mp.sqrt(mp.mpf(10) ** (mp.mpf(snr) / 10)) / mp.sqrt(2)) / 2
        assert float(2 * p - p * p) == pytest.approx(expected, rel=1e-11)


@pytest.mark.parametrize("snr", sorted(MPMATH_SER))
def test_analytic_ser(snr):
    assert baseline.qpsk_awgn_ser_analytic(snr) == pytest.approx(MPMATH_SER[snr], rel=1e-9)


def test_analytic_headline_values():
    assert baseline.qpsk_awgn_ser_analytic(0.0) == pytest.approx(0.29214, abs=5e-6)
    assert baseline.qpsk_awgn_ser_analytic(10.0) == pytest.approx(1.5648e-3, rel=1e-4)


def test_analytic_vectorized_and_monotone():
    s = np.linspace(-10, 20, 61)
    ser = baseline.qpsk_awgn_ser_analytic(s)
    assert ser.shape == s.shape
    assert np.all(np.diff(ser) < 0)
    assert ser[0] < 0.75


@pytest.mark.parametrize("snr", [0.0, 4.0, 8.0])
def test_monte_carlo_within_three_sigma(snr):
    n = 400_000
    ser, errors, count = baseline.qpsk_awgn_ser_monte_carlo(snr, n, RngStream(1, 4).child(int(snr)))
    p = baseline.qpsk_awgn_ser_analytic(snr)
    assert count == n and errors == round(ser * n)
    assert abs(ser - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_monte_carlo_deterministic():
    a = baseline.qpsk_awgn_ser_monte_carlo(3.0, 10_000, RngStream(9))
    b = baseline.qpsk_awgn_ser_monte_carlo(3.0, 10_000, RngStream(9))
    assert a == b


def test_modulate_unit_energy_and_range():
    pts = baseline.qpsk_modulate(np.arange(4))
    np.testing.assert_allclose(np.abs(pts), 1.0)
    with pytest.raises(ValueError):
        baseline.qpsk_modulate([4])
    with pytest.raises(ValueError):
        baseline.qpsk_modulate([-1])


def test_gray_mapping_neighbours_differ_in_one_bit():
    order = np.argsort(np.angle(baseline.QPSK_POINTS))
    ring = list(order) + [order[0]]
    for a, b in zip(ring, ring[1:]):
        assert baseline.bit_errors(a, b) == 1


def test_demodulate_noiseless():
    m = np.array([0, 1, 2, 3, 3, 0])
    np.testing.assert_array_equal(baseline.qpsk_demodulate(baseline.qpsk_modulate(m)), m)


def test_demodulate_ties_go_to_lowest_label():
    assert baseline.qpsk_demodulate(0j) == 0
    assert baseline.qpsk_demodulate(1j) == 0   # between labels 0 and 1
    assert baseline.qpsk_demodulate(-1.0) == 1  # between labels 1 and 3
    assert baseline.qpsk_demodulate(-1j) == 2  # between labels 2 and 3


@given(st.floats(-50, 50).filter(lambda v: abs(v) > 1e-9), st.floats(-50, 50).filter(lambda v: abs(v) > 1e-9))
def test_minimum_distance_equals_quadrant_rule(re, im):
    quadrant = {(True, True): 0, (False, True): 1, (True, False): 2, (False, False): 3}
    assert baseline.qpsk_demodulate(complex(re, im)) == quadrant[(re > 0, im > 0)]


def test_gray_errors_are_mostly_single_bit():
    n = 200_000
    rng = RngStream(5)
    m = rng.integers(0, 4, n)
    noise = rng.standard_normal(2 * n).view(complex) * np.sqrt(0.1 / 2)
    d = baseline.qpsk_demodulate(baseline.qpsk_modulate(m) + noise)
    be = baseline.bit_errors(m, d)
    wrong = be[be > 0]
    assert wrong.size > 0
    assert np.mean(wrong == 1) > 0.99


def test_direct_link_shift():
    for l_o in (0.0, 6.0, 10.0):
        assert baseline.direct_link_ser(12.0, l_o) == baseline.qpsk_awgn_ser_analytic(12.0 - l_o)
    with pytest.raises(ValueError):
        baseline.direct_link_ser(5.0, -1.0)


def test_bit_errors():
    np.testing.assert_array_equal(baseline.bit_errors([0, 0, 0, 3], [0, 1, 3, 0]), [0, 1, 2, 2])
