"""Simulated interferometric calibration of the per-beam phase mask.

Pipeline: inject a known per-beam aberration, interfere each beam with a
fixed reference beam at the focal plane, fit the fringe phase along a fixed
line cut, build the correction mask, and verify the restored focal peak.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .array_synthesis import ArrayField, Tone, synthesize_array, wrap_phase
from .config import RipaGeometry, derive_quantities
from .errors import FitError, NumericalError
from .focal_solver import FieldGrid, _envelope_factors, focal_field_direct


@dataclass
class AberrationField:
    """Ground-truth per-beam phase errors (rad), wrapped to [-pi, pi)."""

    per_beam_phase: np.ndarray
    seed: int
    model: str

    def __post_init__(self):
        self.per_beam_phase = wrap_phase(np.asarray(self.per_beam_phase,
                                                    dtype=float))


@dataclass
class PhaseMask:
    """Per-beam corrections; zero at the reference beam by construction."""

    per_beam_correction: np.ndarray
    reference_index: tuple[int, int]


@dataclass
class AffineMap:
    """Beam index -> device pixel coordinates, x = A @ (i, j) + b."""

    linear: np.ndarray
    offset: np.ndarray
    residual: float

    def __call__(self, ij):
        ij = np.asarray(ij, dtype=float)
        return ij @ self.linear.T + self.offset


ABERRATION_MODELS = ("random-uniform", "smooth-low-order")


def inject_aberrations(geom: RipaGeometry, model: str = "random-uniform",
                       seed: int = 0, amplitude: float = math.pi
                       ) -> AberrationField:
    """Deterministic synthetic aberrations at the beam sites.

    random-uniform draws i.i.d. phases in [-amplitude, amplitude];
    smooth-low-order samples a random tilt + quadratic surface scaled to a
    peak magnitude of `amplitude`.
    """
    if model not in ABERRATION_MODELS:
        raise ValueError(f"model must be one of {ABERRATION_MODELS}")
    rng = np.random.default_rng(seed)
    shape = (geom.n_cols, geom.n_rows)
    if model == "random-uniform":
        phases = rng.uniform(-amplitude, amplitude, size=shape)
    else:
        i = (np.arange(geom.n_cols)[:, None] - (geom.n_cols - 1) / 2)
        j = (np.arange(geom.n_rows)[None, :] - (geom.n_rows - 1) / 2)
        c = rng.standard_normal(5)
        surf = (c[0] * i + c[1] * j + c[2] * i**2 + c[3] * j**2
                + c[4] * i * j)
        peak = np.abs(surf).max()
        phases = amplitude * surf / peak if peak > 0 else surf
    return AberrationField(phases, seed, model)


def _aberrated_array(geom: RipaGeometry, aberr: AberrationField | None,
                     keep=None) -> ArrayField:
    arr = synthesize_array(Tone(0.0), geom, None)
    if aberr is not None:
        arr.amplitudes = arr.amplitudes * np.exp(1j * aberr.per_beam_phase)
    if keep is not None:
        mask = np.zeros_like(arr.amplitudes, dtype=float)
        for i, j in keep:
            mask[i, j] = 1.0
        arr.amplitudes = arr.amplitudes * mask
    return arr


def fringe_pattern(geom: RipaGeometry, aberr: AberrationField | None,
                   pair, half_width: float | None = None,
                   points: int = 501) -> FieldGrid:
    """Two-beam interference intensity field around the focal origin.

    The fringe spatial frequency is set by the pair's separation
    (|delta index| * pitch maps to a period bz_extent / |delta index| per
    axis); the fringe phase carries the two beams' phase difference.
    """
    (ia, ja), (ib, jb) = pair
    if (ia, ja) == (ib, jb):
        raise ValueError("fringe pair must be two distinct beams")
    dq = derive_quantities(geom)
    if half_width is None:
        half_width = 1.5 * dq.bz_extent
    arr = _aberrated_array(geom, aberr, keep=[(ia, ja), (ib, jb)])
    axis = np.linspace(-half_width, half_width, points)
    field = focal_field_direct(arr, geom, axis, axis)
    return FieldGrid(field, axis[1] - axis[0], axis[1] - axis[0],
                     (axis[0], axis[0]))


def fringe_cut(geom: RipaGeometry, aberr: AberrationField | None, pair,
               half_width: float | None = None, points: int = 2001):
    """1-D intensity cut through the origin along the pair separation.

    The cut runs from the probed beam (first pair entry) toward the second,
    so the fitted fringe phase equals the probed beam's phase minus the
    second's. The common Gaussian envelope (identical for all beams) is
    divided out, leaving an exactly sinusoidal profile.
    """
    (ia, ja), (ib, jb) = pair
    if (ia, ja) == (ib, jb):
        raise ValueError("fringe pair must be two distinct beams")
    dq = derive_quantities(geom)
    di, dj = ib - ia, jb - ja
    sep = math.hypot(di, dj)
    if half_width is None:
        # >= 3 fringe periods along the cut
        half_width = 1.5 * dq.bz_extent / sep
    ux, uy = di / sep, dj / sep
    s = np.linspace(-half_width, half_width, points)
    arr = _aberrated_array(geom, aberr, keep=[(ia, ja), (ib, jb)])
    x, y = s * ux, s * uy
    field = focal_field_direct(arr, geom, x, y, elementwise=True)
    gx, gy = _envelope_factors(geom, geom.mode_waist, x, y, "hg00")
    lam_f = geom.wavelength * geom.focus_focal
    env = np.abs(gx * gy / lam_f) ** 2
    return s, np.abs(field) ** 2 / env


@dataclass(frozen=True)
class FringeFit:
    i0: float
    gamma: float
    freq: float
    phase: float
    residual: float


def fit_fringe(positions, intensity, min_contrast: float = 0.05) -> FringeFit:
    """Fit I(x) = I0 (1 + gamma cos(2 pi f x + phi)).

    The frequency is initialized from the dominant nonzero FFT bin; the
    coordinate origin is wherever positions == 0, and must be kept fixed
    across pairs for the fitted phases to be comparable.
    """
    x = np.asarray(positions, dtype=float)
    y = np.asarray(intensity, dtype=float)
    if x.size < 16:
        raise ValueError("need at least 16 samples along the cut")
    dx = x[1] - x[0]
    spec = np.fft.rfft(y - y.mean())
    freqs = np.fft.rfftfreq(y.size, dx)
    k0 = 1 + int(np.argmax(np.abs(spec[1:])))
    if freqs[k0] * (x[-1] - x[0]) < 2.0:
        raise FitError("fewer than 2 fringe periods in the cut")
    i0_guess = float(y.mean())
    # origin-aware projection onto the dominant bin frequency
    proj = np.mean((y - i0_guess) * np.exp(-2j * np.pi * freqs[k0] * x))
    gamma_guess = min(1.0, 2 * np.abs(proj) / i0_guess)
    phase_guess = float(np.angle(proj))

    def model(xx, i0, gamma, f, phi):
        return i0 * (1 + gamma * np.cos(2 * np.pi * f * xx + phi))

    p0 = [i0_guess, gamma_guess, float(freqs[k0]), phase_guess]
    popt, _ = curve_fit(model, x, y, p0=p0, maxfev=20000)
    i0, gamma, f, phi = popt
    if f < 0:  # cos parity: fold to positive frequency
        f, phi = -f, -phi
    if gamma < 0:
        gamma, phi = -gamma, phi + np.pi
    phi = float(wrap_phase(phi))
    resid = float(np.sqrt(np.mean((model(x, *popt) - y) ** 2)) / max(i0, 1e-300))
    if gamma < min_contrast:
        raise FitError(f"fringe contrast {gamma:.3g} below floor "
                       f"{min_contrast:g}", residual=resid)
    return FringeFit(float(i0), float(gamma), float(f), phi, resid)


def solve_affine(pairs) -> AffineMap:
    """Least-squares affine fit of beam indices to pixel positions.

    pairs: iterable of ((i, j), (px, py)). Requires >= 3 non-collinear
    beam indices.
    """
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValueError("need at least 3 index/position pairs")
    ij = np.array([[i, j, 1.0] for (i, j), _ in pairs], dtype=float)
    xy = np.array([p for _, p in pairs], dtype=float)
    if np.linalg.matrix_rank(ij) < 3:
        raise NumericalError("beam indices are collinear; affine map "
                             "underdetermined")
    sol, _, _, _ = np.linalg.lstsq(ij, xy, rcond=None)
    fit = ij @ sol
    residual = float(np.sqrt(np.mean((fit - xy) ** 2)))
    return AffineMap(sol[:2].T.copy(), sol[2].copy(), residual)


def _peak_intensity(geom: RipaGeometry, arr: ArrayField,
                    points: int = 161) -> float:
    dq = derive_quantities(geom)
    axis = np.linspace(-dq.bz_extent / 2, dq.bz_extent / 2, points)
    inten = np.abs(focal_field_direct(arr, geom, axis, axis)) ** 2
    return float(inten.max())


@dataclass
class CalibrationResult:
    mask: PhaseMask
    strehl_before: float
    strehl_after: float
    fitted_phases: np.ndarray


def calibrate_and_verify(geom: RipaGeometry, aberr: AberrationField,
                         reference: tuple[int, int] = (0, 0),
                         cut_points: int = 2001) -> CalibrationResult:
    """Fringe-fit every beam against the reference and verify the mask.

    The mask is the negated fitted relative phase per beam (zero at the
    reference). Strehl here is the focal peak intensity relative to the
    aberration-free array.
    """
    n_cols, n_rows = geom.n_cols, geom.n_rows
    if aberr.per_beam_phase.shape != (n_cols, n_rows):
        raise ValueError("aberration field does not match the geometry")
    ir, jr = reference
    fitted = np.zeros((n_cols, n_rows))
    failures = []
    for i in range(n_cols):
        for j in range(n_rows):
            if (i, j) == (ir, jr):
                continue
            s, inten = fringe_cut(geom, aberr, ((i, j), (ir, jr)),
                                  points=cut_points)
            try:
                fit = fit_fringe(s, inten)
            except FitError as exc:
                failures.append(f"beam ({i},{j}): {exc}")
                continue
            fitted[i, j] = fit.phase
    if failures:
        raise FitError("calibration failed for " + "; ".join(failures))

    mask = PhaseMask(wrap_phase(-fitted), (ir, jr))
    ideal = _peak_intensity(geom, _aberrated_array(geom, None))
    before = _peak_intensity(geom, _aberrated_array(geom, aberr))
    corrected = _aberrated_array(geom, aberr)
    corrected.amplitudes = corrected.amplitudes * np.exp(
        1j * mask.per_beam_correction)
    after = _peak_intensity(geom, corrected)
    return CalibrationResult(mask, before / ideal, after / ideal, fitted)
