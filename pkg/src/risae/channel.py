"""Single-path geometric channels for a uniform linear RIS and AWGN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import RngStream, complex_vector, sample_complex_gaussian


@dataclass(frozen=True)
class Geometry:
    """RIS array and link angles.

    Only azimuth enters the array response; elevation is stored for
    completeness and held at broadside (90 deg).
    """

    n_elements: int = 32
    spacing_wavelengths: float = 0.5
    incident_azimuth_deg: float = 90.0
    receiver_azimuth_deg: float = 110.0
    elevation_deg: float = 90.0

    def __post_init__(self):
        if int(self.n_elements) < 1:
            raise ValueError("n_elements must be >= 1")
        if not self.spacing_wavelengths > 0:
            raise ValueError("spacing_wavelengths must be > 0")
        for name in ("incident_azimuth_deg", "receiver_azimuth_deg"):
            v = getattr(self, name)
            if not 0.0 <= v < 360.0:
                raise ValueError(f"{name} must be in [0, 360), got {v}")


@dataclass(frozen=True)
class Channel:
    gain: float
    response: np.ndarray

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError(f"channel gain must be positive, got {self.gain}")
        resp = complex_vector(self.response)
        resp.setflags(write=False)
        object.__setattr__(self, "response", resp)

    @property
    def n_elements(self) -> int:
        return self.response.size

    @property
    def vector(self) -> np.ndarray:
        """The full channel ``gain * response``."""
        return self.gain * self.response


def array_response(geometry: Geometry, azimuth_deg: float) -> np.ndarray:
    """ULA steering vector ``exp(j 2 pi d n cos(azimuth))``, ``n = 0..N-1``."""
    n = np.arange(geometry.n_elements)
    phase = 2.0 * np.pi * geometry.spacing_wavelengths * n * np.cos(np.deg2rad(azimuth_deg))
    return np.exp(1j * phase)


def make_channel(geometry: Geometry, azimuth_deg: float, gain: float = 1.0) -> Channel:
    return Channel(gain=float(gain), response=array_response(geometry, azimuth_deg))


def add_awgn(y, sigma_sq: float, rng: RngStream) -> np.ndarray:
    """Return ``y + n`` with circular complex noise of per-sample variance ``sigma_sq``."""
    if sigma_sq < 0:
        raise ValueError(f"noise variance must be non-negative, got {sigma_sq}")
    y = np.asarray(y, dtype=np.complex128)
    if sigma_sq == 0:
        return y.copy()
    return y + sample_complex_gaussian(rng, y.size, sigma_sq).reshape(y.shape)
