"""Gray-mapped QPSK over AWGN: the conventional reference link.

SNR is Es/N0 with unit symbol energy and N0 the total complex noise
variance, the same convention :func:`risae.autoencoder.calibrate_snr` uses.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erfc

from .numerics import RngStream, db_to_linear_power

# label -> point; labels 0, 1, 3, 2 counter-clockwise from (1+j)/sqrt(2)
QPSK_POINTS = np.array([1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j]) / np.sqrt(2.0)


def qpsk_modulate(messages) -> np.ndarray:
    m = np.asarray(messages, dtype=np.int64)
    if m.size and (m.min() < 0 or m.max() > 3):
        raise ValueError("QPSK messages must be in 0..3")
    return QPSK_POINTS[m]


def qpsk_demodulate(y) -> np.ndarray:
    """Minimum-distance decisions; equidistant ties go to the lowest label."""
    y = np.asarray(y, dtype=np.complex128)
    d = np.abs(y[..., None] - QPSK_POINTS) ** 2
    return np.argmin(d, axis=-1)


def q_function(x):
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) / np.sqrt(2.0))


def qpsk_awgn_ser_analytic(snr_db):
    """Exact QPSK symbol error rate, ``2p - p**2`` with ``p = Q(sqrt(Es/N0))``."""
    p = q_function(np.sqrt(db_to_linear_power(snr_db)))
    ser = 2.0 * p - p * p
    return float(ser) if np.ndim(ser) == 0 else ser


def qpsk_awgn_ser_monte_carlo(snr_db: float, n_symbols: int, rng: RngStream) -> tuple[float, int, int]:
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    sigma_sq = 1.0 / db_to_linear_power(snr_db)
    messages = rng.integers(0, 4, n_symbols)
    noise = rng.standard_normal(2 * n_symbols).view(np.complex128) * np.sqrt(sigma_sq / 2.0)
    decided = qpsk_demodulate(qpsk_modulate(messages) + noise)
    errors = int(np.count_nonzero(decided != messages))
    return errors / n_symbols, errors, n_symbols


def direct_link_ser(snr_db, l_o_db: float):
    """Analytic SER of the obstructed direct link, evaluated at ``snr_db - l_o_db``."""
    if l_o_db < 0:
        raise ValueError("obstruction loss must be non-negative")
    return qpsk_awgn_ser_analytic(np.asarray(snr_db) - l_o_db)


def bit_errors(sent, decided) -> np.ndarray:
    """Per-symbol Hamming distance between the 2-bit labels."""
    diff = np.bitwise_xor(np.asarray(sent), np.asarray(decided))
    return (diff & 1) + ((diff >> 1) & 1)
