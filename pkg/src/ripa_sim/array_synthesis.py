"""Drive tones, frequency-to-phase mapping, and phased-array synthesis.

Sign conventions (shared package-wide): a tone detuned by dv above the
phase reference acquires per-round-trip phases
phi_x = wrap(2 pi L_rt2 dv / c) and phi_y = wrap(2 pi L_rt1 dv / c), both in
[-pi, pi); the beam (i, j) then carries exp(+i (i phi_x + j phi_y)), and the
focal-plane kernel exp(-i 2 pi (i x + j y)/L) places the interference peak
at (x, y) = L (phi_x, phi_y) / 2 pi.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .config import C_LIGHT, RipaGeometry, LossModel, require_valid
from .errors import RipaError


def wrap_phase(phi):
    """Wrap angle(s) into [-pi, pi)."""
    return (np.asarray(phi) + np.pi) % (2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class Tone:
    """One drive tone: detuning from the phase reference, amplitude, phase."""

    detuning: float
    amplitude: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("tone amplitude must be >= 0")


ToneSet = list  # list[Tone]; serialized as a JSON array


def tones_to_json(tones) -> str:
    return json.dumps(
        [{"detuning_hz": t.detuning, "amplitude": t.amplitude,
          "phase_rad": t.phase} for t in tones],
        indent=2, sort_keys=True)


def tones_from_json(text: str):
    data = json.loads(text)
    return [Tone(d["detuning_hz"], d.get("amplitude", 1.0), d.get("phase_rad", 0.0))
            for d in data]


def phase_pair(detuning: float, geom: RipaGeometry):
    """Per-round-trip phases (phi_x, phi_y) of a tone, wrapped to [-pi, pi)."""
    phi_x = wrap_phase(2.0 * np.pi * geom.roundtrip_2 * detuning / C_LIGHT)
    phi_y = wrap_phase(2.0 * np.pi * geom.roundtrip_1 * detuning / C_LIGHT)
    return float(phi_x), float(phi_y)


def spot_position(detuning: float, geom: RipaGeometry):
    """First-zone focal position addressed by a tone."""
    phi_x, phi_y = phase_pair(detuning, geom)
    bz = geom.bz_extent
    return bz * phi_x / (2.0 * np.pi), bz * phi_y / (2.0 * np.pi)


@dataclass
class ArrayField:
    """Complex amplitudes of the n_cols x n_rows beam array.

    amplitudes[i, j] belongs to the beam displaced i pitches along x and
    j along y; pitch and the common mode waist complete the description.
    """

    amplitudes: np.ndarray
    pitch: float
    mode_waist: float

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.ndim != 2:
            raise ValueError("amplitudes must be a 2-D matrix")

    @property
    def n_cols(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def n_rows(self) -> int:
        return self.amplitudes.shape[1]


def synthesize_array(tone: Tone, geom: RipaGeometry,
                     loss: LossModel | None = None) -> ArrayField:
    """Phased array produced by a single tone, including round-trip decay.

    a_{i,j} = A e^{i phase} (1-a_2)^{i/2} (1-a_1)^{j/2} e^{i(i phi_x + j phi_y)};
    beam (0, 0) exits before suffering any loss.
    """
    require_valid(geom, loss)
    phi_x, phi_y = phase_pair(tone.detuning, geom)
    i = np.arange(geom.n_cols)[:, None]
    j = np.arange(geom.n_rows)[None, :]
    rx = math.sqrt(1.0 - (loss.a_2 if loss else 0.0))
    ry = math.sqrt(1.0 - (loss.a_1 if loss else 0.0))
    amps = (tone.amplitude * np.exp(1j * tone.phase)
            * rx**i * ry**j * np.exp(1j * (i * phi_x + j * phi_y)))
    return ArrayField(amps, geom.mla_pitch, geom.mode_waist)


def static_intensity_weights(tones) -> list[float]:
    """Normalized |A_k|^2 weights of a long-exposure multi-tone image.

    Distinct tones are mutually incoherent when time-averaged; tones at the
    same frequency would add coherently and must be merged beforehand.
    """
    if not tones:
        raise ValueError("empty tone set")
    detunings = [t.detuning for t in tones]
    if len(set(detunings)) != len(detunings):
        raise RipaError("duplicate detunings: coherent same-frequency tones "
                        "must be pre-merged")
    powers = np.array([t.amplitude**2 for t in tones], dtype=float)
    total = powers.sum()
    if total == 0:
        raise RipaError("all tone amplitudes are zero")
    return list(powers / total)
