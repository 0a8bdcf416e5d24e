"""RIS reflection codebooks, reflection, and beam-selection oracles.

Codewords are real ``+1/-1`` vectors: element phase 0 deg maps to ``+1`` and
180 deg to ``-1``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .channel import Channel, Geometry


def wrap_phase_deg(phase_deg):
    """Wrap to the half-open interval ``(-180, 180]``."""
    p = np.asarray(phase_deg, dtype=np.float64)
    return p - 360.0 * np.ceil((p - 180.0) / 360.0)


def quantize_phase(phase_deg, bits: int = 1):
    """Round a phase to the nearest of ``2**bits`` uniform levels.

    The result lies in ``[0, 360)``. Exact half-step ties round toward zero
    so that, for one bit, the closed interval [-90, 90] maps to 0 deg.
    """
    if bits < 1:
        raise ValueError("bits must be >= 1")
    step = 360.0 / 2**bits
    w = wrap_phase_deg(phase_deg)
    levels = np.ceil(np.abs(w) / step - 0.5)
    q = np.mod(np.sign(w) * levels * step, 360.0)
    return float(q) if np.ndim(q) == 0 else q


def quantize_phase_1bit(phase_deg):
    return quantize_phase(phase_deg, bits=1)


def element_phases_deg(geometry: Geometry, azimuth_deg: float) -> np.ndarray:
    n = np.arange(geometry.n_elements)
    return 360.0 * geometry.spacing_wavelengths * n * np.cos(np.deg2rad(azimuth_deg))


def continuous_reflection(geometry: Geometry, incident_deg: float, desired_deg: float) -> np.ndarray:
    """Unquantized reflection vector ``exp(j (phi_i - phi_d))``; used as a reference."""
    diff = element_phases_deg(geometry, incident_deg) - element_phases_deg(geometry, desired_deg)
    return np.exp(1j * np.deg2rad(diff))


def design_codeword(geometry: Geometry, incident_deg: float, desired_deg: float) -> np.ndarray:
    diff = element_phases_deg(geometry, incident_deg) - element_phases_deg(geometry, desired_deg)
    q = quantize_phase_1bit(diff)
    return np.where(np.asarray(q) == 0.0, 1.0, -1.0)


@dataclass(frozen=True)
class Codebook:
    codewords: np.ndarray  # (size, N) of +/-1
    target_angles_deg: np.ndarray
    incident_angle_deg: float

    def __post_init__(self):
        cw = np.array(self.codewords, dtype=np.float64, ndmin=2)
        angles = np.array(self.target_angles_deg, dtype=np.float64, ndmin=1)
        if cw.shape[0] != angles.shape[0]:
            raise ValueError("one design angle per codeword required")
        if cw.shape[0] == 0:
            raise ValueError("empty codebook")
        if not np.all(np.abs(cw) == 1.0):
            raise ValueError("codeword entries must be +1 or -1")
        cw.setflags(write=False)
        angles.setflags(write=False)
        object.__setattr__(self, "codewords", cw)
        object.__setattr__(self, "target_angles_deg", angles)

    def __len__(self):
        return self.codewords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.codewords.shape[1]

    def to_csv(self) -> str:
        """CSV text with header ``index,angle_deg,e0,...,e{N-1}``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "angle_deg", *(f"e{n}" for n in range(self.n_elements))])
        for i, (angle, cw) in enumerate(zip(self.target_angles_deg, self.codewords)):
            w.writerow([i, repr(float(angle)), *(str(int(e)) for e in cw)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, incident_angle_deg: float) -> "Codebook":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        if header[:2] != ["index", "angle_deg"]:
            raise ValueError("not a codebook CSV")
        angles = [float(r[1]) for r in body]
        cws = [[float(e) for e in r[2:]] for r in body]
        return cls(np.array(cws), np.array(angles), float(incident_angle_deg))


def build_codebook(geometry: Geometry, incident_deg: float, min_deg: float, max_deg: float,
                   size: int) -> Codebook:
    """``size`` codewords steered at a uniform grid of angles, both ends included."""
    if size < 2:
        raise ValueError("codebook size must be >= 2")
    if not min_deg < max_deg:
        raise ValueError(f"degenerate angle range [{min_deg}, {max_deg}]")
    angles = np.linspace(min_deg, max_deg, size)
    cws = np.stack([design_codeword(geometry, incident_deg, a) for a in angles])
    return Codebook(cws, angles, float(incident_deg))


def apply_ris(x_ris, psi, kappa: float) -> np.ndarray:
    """Passive reflection ``y[n] = psi[n] * kappa * x[n]`` (no noise).

    ``x_ris`` may carry leading batch dimensions.
    """
    x_ris = np.asarray(x_ris, dtype=np.complex128)
    psi = np.asarray(psi)
    if x_ris.shape[-1] != psi.shape[-1]:
        raise ValueError(f"length mismatch: {x_ris.shape[-1]} vs {psi.shape[-1]}")
    if not 0 < kappa <= 1:
        raise ValueError(f"kappa must be in (0, 1], got {kappa}")
    return psi * kappa * x_ris


def _cascade(h_tr: Channel, h_ri: Channel) -> np.ndarray:
    if h_tr.n_elements != h_ri.n_elements:
        raise ValueError("channel dimension mismatch")
    return h_tr.vector * h_ri.vector


def beam_responses(h_tr: Channel, h_ri: Channel, codebook: Codebook, kappa: float) -> np.ndarray:
    """Complex end-to-end gain ``kappa * (h_tr * h_ri)^T psi_p`` of every codeword."""
    cascade = _cascade(h_tr, h_ri)
    if codebook.n_elements != cascade.size:
        raise ValueError("codebook / channel dimension mismatch")
    return kappa * (codebook.codewords @ cascade)


def effective_gain(h_tr: Channel, h_ri: Channel, psi, kappa: float) -> float:
    """Receive power gain ``kappa^2 |(h_tr * h_ri)^T psi|^2``."""
    cascade = _cascade(h_tr, h_ri)
    psi = np.asarray(psi)
    if psi.shape != cascade.shape:
        raise ValueError("codeword / channel dimension mismatch")
    return float(kappa**2 * np.abs(cascade @ psi) ** 2)


def achievable_rate(h_tr: Channel, h_ri: Channel, psi, kappa: float, pt: float, sigma_sq: float) -> float:
    if pt <= 0 or sigma_sq <= 0:
        raise ValueError("pt and sigma_sq must be positive")
    return float(np.log2(1.0 + pt * effective_gain(h_tr, h_ri, psi, kappa) / sigma_sq))


def codebook_gains(h_tr: Channel, h_ri: Channel, codebook: Codebook, kappa: float) -> np.ndarray:
    return np.abs(beam_responses(h_tr, h_ri, codebook, kappa)) ** 2


def oracle_best_beam(h_tr: Channel, h_ri: Channel, codebook: Codebook, kappa: float) -> int:
    """Exhaustive argmax of the effective gain; ties go to the lowest index."""
    if len(codebook) == 0:
        raise ValueError("empty codebook")
    return int(np.argmax(codebook_gains(h_tr, h_ri, codebook, kappa)))


def rank_beams(h_tr: Channel, h_ri: Channel, codebook: Codebook, kappa: float) -> np.ndarray:
    """All codebook indices by descending effective gain (stable on ties)."""
    if len(codebook) == 0:
        raise ValueError("empty codebook")
    gains = codebook_gains(h_tr, h_ri, codebook, kappa)
    return np.argsort(-gains, kind="stable")
