"""Paraxial ray-matrix analysis of the re-imaging lens guide.

Covers ABCD composition, the lens-guide Gaussian eigenmode and Gouy phase,
pupil clipping loss, and the focal-plane suppression of first-order odd
(Hermite-Gaussian) contamination modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import RipaGeometry, LossModel, derive_quantities
from .errors import RipaError, StabilityError
from ._grating import lossy_grating_intensity


@dataclass(frozen=True)
class RayMatrix:
    """2x2 paraxial ray matrix; b in meters, c in 1/m."""

    a: float
    b: float
    c: float
    d: float

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def __matmul__(self, other: "RayMatrix") -> "RayMatrix":
        return RayMatrix(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )


def identity() -> RayMatrix:
    return RayMatrix(1.0, 0.0, 0.0, 1.0)


def free_space(length: float) -> RayMatrix:
    return RayMatrix(1.0, length, 0.0, 1.0)


def thin_lens(focal: float) -> RayMatrix:
    return RayMatrix(1.0, 0.0, -1.0 / focal, 1.0)


def compose(elements) -> RayMatrix:
    """Right-to-left product: the first list element acts on the beam first."""
    elements = list(elements)
    if not elements:
        raise ValueError("compose requires at least one element")
    total = elements[0]
    for el in elements[1:]:
        total = el @ total
    return total


def lens_guide_matrix(roundtrip: float, focal: float) -> RayMatrix:
    """One round trip: half the path, the refocusing lens, the other half."""
    half = free_space(roundtrip / 2.0)
    return compose([half, thin_lens(focal), half])


@dataclass(frozen=True)
class GaussianBeamParam:
    """Complex beam parameter q and the wavelength it refers to."""

    q: complex
    wavelength: float

    @property
    def rayleigh_range(self) -> float:
        return self.q.imag

    @property
    def waist(self) -> float:
        if self.q.imag <= 0:
            raise RipaError("unphysical beam: Im(q) must be positive")
        return math.sqrt(self.wavelength * self.q.imag / math.pi)


def eigen_q(m: RayMatrix, wavelength: float) -> GaussianBeamParam:
    """Self-consistent Gaussian mode of a periodic lens guide.

    Solves q = (A q + B) / (C q + D) on the Im(q) > 0 branch. Raises
    StabilityError when |A+D|/2 >= 1.
    """
    half_trace = (m.a + m.d) / 2.0
    if abs(half_trace) >= 1.0:
        raise StabilityError(half_trace)
    # C q^2 + (D - A) q - B = 0
    disc = (m.d - m.a) ** 2 + 4.0 * m.b * m.c
    root = complex(disc) ** 0.5
    if m.c == 0.0:
        raise StabilityError(half_trace)
    for sign in (1.0, -1.0):
        q = ((m.a - m.d) + sign * root) / (2.0 * m.c)
        if q.imag > 0:
            return GaussianBeamParam(q, wavelength)
    raise StabilityError(half_trace)


def propagate_q(beam: GaussianBeamParam, m: RayMatrix) -> GaussianBeamParam:
    q = (m.a * beam.q + m.b) / (m.c * beam.q + m.d)
    return GaussianBeamParam(q, beam.wavelength)


def gouy_roundtrip(beam: GaussianBeamParam, roundtrip: float) -> float:
    """Gouy phase accumulated over one round trip centered on the waist."""
    return 2.0 * math.atan2(roundtrip / 2.0, beam.q.imag)


def clipping_loss(w0: float, pupil_d: float) -> float:
    """Power clipped at a pupil of diameter pupil_d by a beam of waist w0.

    The beam arrives at the pupil with size sqrt(2) w0 (half-confocal
    operating point).
    """
    if w0 <= 0 or pupil_d <= 0:
        raise ValueError("w0 and pupil_d must be positive")
    return math.exp(-2.0 * (pupil_d / 2.0) ** 2 / (math.sqrt(2.0) * w0) ** 2)


@dataclass(frozen=True)
class HgSuppressionStats:
    """Suppression factor S of first-order odd-mode leakage, over positions."""

    s_min: float
    s_mean: float
    s_max: float
    values: np.ndarray  # (n_pos, n_pos) sampled over the first zone


def hg_suppression(geom: RipaGeometry, loss: LossModel | None = None,
                   n_positions: int = 11, mode: str = "01",
                   gouy_per_roundtrip: float = math.pi / 2,
                   grid_points: int = 801,
                   sample_positions=None) -> HgSuppressionStats:
    """Zone-integrated intensity ratio of fundamental vs odd-mode arrays.

    For each sampled addressed position the focal intensity of the array of
    fundamental modes and of the array of first-order odd modes (same
    inter-beam phase ramp, same per-round-trip decay) is integrated over the
    first Brillouin zone. The odd mode walks off by the relative Gouy phase
    per round trip, displacing its grating comb by
    gouy/(2 pi) * L along its own axis; its focal envelope carries the odd
    (x or y times Gaussian) profile with the same total power as the
    fundamental envelope.

    mode "01" is odd along y (short stage), "10" odd along x.
    """
    if mode not in ("01", "10"):
        raise ValueError("mode must be '01' or '10'")
    dq = derive_quantities(geom)
    bz = dq.bz_extent
    w_env = dq.envelope_waist
    a_x = loss.a_2 if loss is not None else 0.0
    a_y = loss.a_1 if loss is not None else 0.0

    u = np.linspace(-bz / 2, bz / 2, grid_points)
    env_even = np.exp(-2.0 * u**2 / w_env**2)
    env_odd = (2.0 * u / w_env) ** 2 * np.exp(-2.0 * u**2 / w_env**2)

    if sample_positions is None:
        pos = np.linspace(-bz / 2, bz / 2, n_positions)
        xs, ys = pos, pos
    else:
        sample_positions = np.atleast_2d(np.asarray(sample_positions, float))
        if sample_positions.size == 0:
            raise ValueError("sample_positions must be non-empty")
        xs = ys = None

    shift = gouy_per_roundtrip / (2.0 * math.pi) * bz

    def axis_integrals(center, n, a_tot, odd_axis):
        g00 = lossy_grating_intensity((u - center) / bz, n, a_tot)
        i00 = np.trapezoid(env_even * g00, u)
        off = shift if odd_axis else 0.0
        g01 = lossy_grating_intensity((u - center - off) / bz, n, a_tot)
        env = env_odd if odd_axis else env_even
        i01 = np.trapezoid(env * g01, u)
        return i00, i01

    odd_on_x = mode == "10"

    def s_at(x0, y0):
        ix00, ix01 = axis_integrals(x0, geom.n_cols, a_x, odd_on_x)
        iy00, iy01 = axis_integrals(y0, geom.n_rows, a_y, not odd_on_x)
        return (ix00 * iy00) / (ix01 * iy01)

    if xs is not None:
        vals = np.array([[s_at(x0, y0) for y0 in ys] for x0 in xs])
    else:
        vals = np.array([s_at(x0, y0) for x0, y0 in sample_positions])
    return HgSuppressionStats(float(vals.min()), float(vals.mean()),
                              float(vals.max()), vals)


def stability_report(geom: RipaGeometry) -> dict:
    """Summary of the lens-guide mode for the CLI `stability` subcommand."""
    m = lens_guide_matrix(geom.roundtrip_1, geom.mla_focal)
    report = {
        "matrix": {"a": m.a, "b": m.b, "c": m.c, "d": m.d},
        "half_trace": (m.a + m.d) / 2.0,
        "stable": abs((m.a + m.d) / 2.0) < 1.0,
    }
    if report["stable"]:
        beam = eigen_q(m, geom.wavelength)
        report.update({
            "mode_waist": beam.waist,
            "rayleigh_range": beam.rayleigh_range,
            "gouy_roundtrip": gouy_roundtrip(beam, geom.roundtrip_1),
            "clipping_loss_500um_pupil": clipping_loss(beam.waist, 500e-6),
        })
    return report
