"""Focal-plane field of a phased beam array.

Three consistent evaluation routes for the same physical model (identical
Gaussian beams of waist w0 on a pitch-p lattice, complex weights a_ij,
focused by a lens of focal length f):

* closed-form per-axis geometric sums (exact for geometric-decay arrays),
* direct pointwise summation (exact for arbitrary weights and HG profiles),
* a zero-padded FFT of the sampled array plane (energy-conserving; the
  route aberrated/Hermite-Gaussian arrays share).

Focal coordinates relate to array-plane spatial frequency by
x_f = lambda f k_x / 2 pi; the zone period is L = f lambda / p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.fft
from scipy.optimize import least_squares

from ._grating import geometric_sum
from ._threads import fft_workers
from .array_synthesis import ArrayField
from .config import RipaGeometry
from .errors import AmbiguityError, FitError, SamplingError

_BEAM_KINDS = ("hg00", "hg01", "hg10")


@dataclass
class FieldGrid:
    """Complex field sampled on a regular grid.

    samples[ix, iy] lives at (origin[0] + ix*dx, origin[1] + iy*dy);
    plane_z is the axial offset from the nominal focus.
    """

    samples: np.ndarray
    dx: float
    dy: float
    origin: tuple[float, float] = (0.0, 0.0)
    plane_z: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 2 or min(self.samples.shape) < 2:
            raise ValueError("samples must be a 2-D grid, >= 2 per axis")
        if self.dx <= 0 or self.dy <= 0:
            raise ValueError("grid spacings must be positive")

    @property
    def x_axis(self) -> np.ndarray:
        return self.origin[0] + self.dx * np.arange(self.samples.shape[0])

    @property
    def y_axis(self) -> np.ndarray:
        return self.origin[1] + self.dy * np.arange(self.samples.shape[1])

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.dx * self.dy)

    def crop(self, half_width_x: float, half_width_y: float | None = None,
             center=(0.0, 0.0)) -> "FieldGrid":
        if half_width_y is None:
            half_width_y = half_width_x
        x, y = self.x_axis, self.y_axis
        mx = np.abs(x - center[0]) <= half_width_x + 1e-12
        my = np.abs(y - center[1]) <= half_width_y + 1e-12
        ix = np.where(mx)[0]
        iy = np.where(my)[0]
        if ix.size < 2 or iy.size < 2:
            raise ValueError("crop window smaller than the grid spacing")
        return FieldGrid(self.samples[np.ix_(ix, iy)], self.dx, self.dy,
                         (x[ix[0]], y[iy[0]]), self.plane_z)


@dataclass(frozen=True)
class GridSpec:
    """Sampling of the array plane feeding the FFT solver.

    The focal-plane spacing is lambda f / (array_points * array_dx); the
    defaults give 1.52 um (< w0'/8 for the reference geometry) and an
    output window of 3 Brillouin zones.
    """

    array_points: int = 4096
    array_dx: float = 25e-6
    window_zones: float | None = 3.0


@dataclass(frozen=True)
class SpotFit:
    """Local 2-D Gaussian fit of one interference spot."""

    center: tuple[float, float]
    w_x: float
    w_y: float
    peak: float
    residual: float
    offset: float = 0.0


def _axis_positions(n: int, pitch: float) -> np.ndarray:
    # array centered on the optical axis
    return pitch * (np.arange(n) - (n - 1) / 2.0)


def _axis_profile(kind_odd: bool, coords: np.ndarray, centers: np.ndarray,
                  w0: float) -> np.ndarray:
    """(n_beams, n_samples) per-axis beam profiles; odd = normalized HG1."""
    u = coords[None, :] - centers[:, None]
    g = np.exp(-(u / w0) ** 2)
    if kind_odd:
        g = (2.0 * u / w0) * g
    return g


def array_plane_field(arr: ArrayField, spec: GridSpec = GridSpec(),
                      beam_kind: str = "hg00") -> FieldGrid:
    """Sample the beam array on a square grid (the transform's input plane)."""
    if beam_kind not in _BEAM_KINDS:
        raise ValueError(f"beam_kind must be one of {_BEAM_KINDS}")
    coords, xc, yc = _sampling_checks(arr, spec)
    w0 = arr.mode_waist
    px = _axis_profile(beam_kind == "hg10", coords, xc, w0)
    py = _axis_profile(beam_kind == "hg01", coords, yc, w0)
    samples = px.T.astype(complex) @ (arr.amplitudes @ py.astype(complex))
    return FieldGrid(samples, spec.array_dx, spec.array_dx,
                     (coords[0], coords[0]), plane_z=0.0)


def _sampling_checks(arr: ArrayField, spec: GridSpec):
    n, dx, w0 = spec.array_points, spec.array_dx, arr.mode_waist
    if w0 < 3.0 * dx:
        raise SamplingError(
            f"array grid undersamples the beams (w0 = {w0:.3g} < 3 dx = "
            f"{3 * dx:.3g}); decrease array_dx")
    coords = dx * (np.arange(n) - n / 2.0)
    xc = _axis_positions(arr.n_cols, arr.pitch)
    yc = _axis_positions(arr.n_rows, arr.pitch)
    if (np.abs(xc).max() + 4.0 * w0 > coords[-1]) or (
            np.abs(yc).max() + 4.0 * w0 > coords[-1]):
        raise SamplingError("array footprint exceeds the grid extent; "
                            "increase array_points or array_dx")
    return coords, xc, yc


def focal_field_numeric(arr: ArrayField, geom: RipaGeometry,
                        spec: GridSpec = GridSpec(),
                        beam_kind: str = "hg00") -> FieldGrid:
    """Focal field via the discrete 2-D Fourier transform of the sampled array.

    The sampled array plane is a sum of separable outer products (per-axis
    beam profiles times the weight matrix), so its 2-D DFT is evaluated
    exactly as per-axis 1-D DFTs contracted with the weights; the result is
    identical to transforming the full plane. Energy (sum |E|^2 dA) is
    conserved between the planes. The returned grid is cropped to
    spec.window_zones Brillouin zones (None = full grid).
    """
    if beam_kind not in _BEAM_KINDS:
        raise ValueError(f"beam_kind must be one of {_BEAM_KINDS}")
    coords, xc, yc = _sampling_checks(arr, spec)
    n, dx = spec.array_points, spec.array_dx
    w0 = arr.mode_waist
    lam_f = geom.wavelength * geom.focus_focal
    px = _axis_profile(beam_kind == "hg10", coords, xc, w0).astype(complex)
    py = _axis_profile(beam_kind == "hg01", coords, yc, w0).astype(complex)
    workers = fft_workers()
    fpx = scipy.fft.fftshift(scipy.fft.fft(px, axis=1, workers=workers), axes=1)
    fpy = scipy.fft.fftshift(scipy.fft.fft(py, axis=1, workers=workers), axes=1)
    nu = scipy.fft.fftshift(scipy.fft.fftfreq(n, dx))
    origin_phase = np.exp(-2j * np.pi * nu * coords[0])  # grid starts at x0 != 0
    fpx *= origin_phase
    fpy *= origin_phase
    freqs = nu * lam_f
    step = float(freqs[1] - freqs[0])
    if spec.window_zones is not None:
        half = spec.window_zones * geom.bz_extent / 2.0
        keep = np.abs(freqs) <= half + 1e-12
        fpx, fpy, freqs = fpx[:, keep], fpy[:, keep], freqs[keep]
    samples = fpx.T @ arr.amplitudes @ fpy * (dx * dx / lam_f)
    return FieldGrid(samples, step, step, (float(freqs[0]), float(freqs[0])),
                     plane_z=0.0)


def _structure_factor(amps: np.ndarray, x, y, bz: float,
                      elementwise: bool) -> np.ndarray:
    n_cols, n_rows = amps.shape
    i = np.arange(n_cols)
    j = np.arange(n_rows)
    cx, cy = (n_cols - 1) / 2.0, (n_rows - 1) / 2.0
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if elementwise:
        x, y = np.broadcast_arrays(x, y)
        ex = np.exp(-2j * np.pi * np.multiply.outer(x, i) / bz)
        ey = np.exp(-2j * np.pi * np.multiply.outer(y, j) / bz)
        s = np.einsum("...i,ij,...j->...", ex, amps, ey)
        center = np.exp(2j * np.pi * (cx * x + cy * y) / bz)
        return s * center
    ex = np.exp(-2j * np.pi * np.multiply.outer(i, x) / bz)  # (n_cols, nx)
    ey = np.exp(-2j * np.pi * np.multiply.outer(j, y) / bz)  # (n_rows, ny)
    s = ex.T @ amps @ ey
    center = np.exp(2j * np.pi * np.add.outer(cx * x, cy * y) / bz)
    return s * center


def _envelope_factors(geom: RipaGeometry, w0: float, x, y, beam_kind: str):
    lam_f = geom.wavelength * geom.focus_focal
    sx = math.pi * w0 / lam_f * np.asarray(x, dtype=float)
    sy = math.pi * w0 / lam_f * np.asarray(y, dtype=float)
    gx = math.sqrt(math.pi) * w0 * np.exp(-sx**2)
    gy = math.sqrt(math.pi) * w0 * np.exp(-sy**2)
    if beam_kind == "hg10":
        gx = gx * (-2j * sx)
    elif beam_kind == "hg01":
        gy = gy * (-2j * sy)
    return gx, gy


def focal_field_direct(arr: ArrayField, geom: RipaGeometry, x, y,
                       beam_kind: str = "hg00",
                       elementwise: bool = False) -> np.ndarray:
    """Exact focal field at arbitrary points (grid outer product by default).

    With elementwise=True, x and y broadcast against each other as point
    coordinates instead of spanning a grid.
    """
    if beam_kind not in _BEAM_KINDS:
        raise ValueError(f"beam_kind must be one of {_BEAM_KINDS}")
    lam_f = geom.wavelength * geom.focus_focal
    gx, gy = _envelope_factors(geom, arr.mode_waist, x, y, beam_kind)
    s = _structure_factor(arr.amplitudes, x, y, geom.bz_extent, elementwise)
    if elementwise:
        env = gx * gy
    else:
        env = np.multiply.outer(gx, gy)
    return env * s / lam_f


def _geometric_ratios(amps: np.ndarray):
    """Per-axis complex ratios of a rank-1 geometric array (or raise)."""
    a00 = amps[0, 0]
    if a00 == 0:
        raise ValueError("analytic route requires a nonzero (0,0) beam")
    qx = amps[1, 0] / a00 if amps.shape[0] > 1 else 0.0 + 0.0j
    qy = amps[0, 1] / a00 if amps.shape[1] > 1 else 0.0 + 0.0j
    i = np.arange(amps.shape[0])[:, None]
    j = np.arange(amps.shape[1])[None, :]
    model = a00 * qx**i * qy**j
    if not np.allclose(model, amps, rtol=1e-9, atol=1e-12 * abs(a00)):
        raise ValueError("array amplitudes are not per-axis geometric; "
                         "use the numeric or direct solver")
    return a00, qx, qy


def focal_intensity_analytic(arr: ArrayField, geom: RipaGeometry, x, y):
    """Closed-form focal intensity of a per-axis geometric array.

    Uniform lossless arrays reduce to the textbook grating distribution
    (envelope times sin^2(N pi u)/sin^2(pi u) per axis, with the removable
    N^2 limit at the peaks); lossy arrays use the exact complex geometric
    series per axis. Matches focal_field_direct to rounding error.
    """
    a00, qx, qy = _geometric_ratios(arr.amplitudes)
    bz = geom.bz_extent
    lam_f = geom.wavelength * geom.focus_focal
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xb, yb = np.broadcast_arrays(x, y)
    sx = geometric_sum(qx * np.exp(-2j * np.pi * xb / bz), arr.n_cols)
    sy = geometric_sum(qy * np.exp(-2j * np.pi * yb / bz), arr.n_rows)
    gx, gy = _envelope_factors(geom, arr.mode_waist, xb, yb, "hg00")
    out = np.abs(a00 * gx * gy * sx * sy / lam_f) ** 2
    return out if out.shape else float(out)


def gaussian_equiv_waist(n: int, bz_extent: float) -> float:
    """1/e^2 waist of the Gaussian matching the n-beam interference peak."""
    if n < 2:
        raise ValueError("n must be >= 2 (single beam has no grating peak)")
    return bz_extent * math.sqrt(6.0 / (math.pi**2 * (n**2 - 1)))


def _local_maxima(img: np.ndarray, floor: float) -> list[tuple[int, int]]:
    core = img[1:-1, 1:-1]
    mask = core >= floor
    for sx in (-1, 0, 1):
        for sy in (-1, 0, 1):
            if sx == 0 and sy == 0:
                continue
            mask &= core >= img[1 + sx:img.shape[0] - 1 + sx,
                                1 + sy:img.shape[1] - 1 + sy]
    ix, iy = np.where(mask)
    return [(int(a) + 1, int(b) + 1) for a, b in zip(ix, iy)]


def fit_gaussian_2d(x_axis: np.ndarray, y_axis: np.ndarray,
                    intensity: np.ndarray, max_iter: int = 200) -> SpotFit:
    """Least-squares I0 exp(-2((x-cx)^2/wx^2 + (y-cy)^2/wy^2)) + offset."""
    inten = np.asarray(intensity, dtype=float)
    peaks = _local_maxima(inten, 0.5 * inten.max())
    if len(peaks) > 1:
        raise AmbiguityError(
            f"{len(peaks)} local maxima above half peak in the fit window")
    i0, j0 = np.unravel_index(np.argmax(inten), inten.shape)
    pk = float(inten[i0, j0])
    w_guess = max(3 * (x_axis[1] - x_axis[0]), 0.2 * (x_axis[-1] - x_axis[0]))
    xg, yg = np.meshgrid(x_axis, y_axis, indexing="ij")

    def model(p):
        pk_, cx, cy, wx, wy, off = p
        return pk_ * np.exp(-2 * ((xg - cx) ** 2 / wx**2
                                  + (yg - cy) ** 2 / wy**2)) + off

    p0 = np.array([pk, x_axis[i0], y_axis[j0], w_guess, w_guess, 0.0])
    scale = np.array([max(pk, 1e-300), w_guess, w_guess, w_guess, w_guess,
                      max(pk, 1e-300)])
    res = least_squares(lambda p: (model(p) - inten).ravel(), p0,
                        x_scale=scale, max_nfev=max_iter * p0.size)
    rms = math.sqrt(float(np.mean(res.fun**2)))
    rel = rms / pk if pk > 0 else math.inf
    if not res.success:
        raise FitError("2-D Gaussian fit did not converge", residual=rel)
    pk_, cx, cy, wx, wy, off = res.x
    return SpotFit(center=(float(cx), float(cy)), w_x=abs(float(wx)),
                   w_y=abs(float(wy)), peak=float(pk_), residual=rel,
                   offset=float(off))


def fit_spot(grid: FieldGrid, window_center=None,
             window_radius: float | None = None) -> SpotFit:
    """Fit one spot of a FieldGrid, optionally restricted to a window."""
    g = grid
    if window_radius is not None:
        g = grid.crop(window_radius, center=window_center or (0.0, 0.0))
    return fit_gaussian_2d(g.x_axis, g.y_axis, g.intensity)


def propagate_axial(focal: FieldGrid, z: float, wavelength: float,
                    max_clip: float = 1e-2) -> FieldGrid:
    """Band-limited angular-spectrum propagation by z.

    Uses the exact non-evanescent kernel. Plane waves whose transverse
    walk-off over z would exceed a quarter of the window (wrap-around
    aliasing) are clamped to zero; if the clamp would remove more than
    max_clip of the power the propagation is rejected instead
    (grid too small for the distance).
    """
    if z == 0.0:
        return replace(focal, samples=focal.samples.copy())
    k = 2 * np.pi / wavelength
    extent = min(focal.dx * focal.samples.shape[0],
                 focal.dy * focal.samples.shape[1])
    margin = extent / 4.0
    k_lim = k * margin / math.hypot(z, margin)
    ft = scipy.fft.fft2(focal.samples, workers=fft_workers())
    kx = 2 * np.pi * scipy.fft.fftfreq(focal.samples.shape[0], focal.dx)
    ky = 2 * np.pi * scipy.fft.fftfreq(focal.samples.shape[1], focal.dy)
    kx2, ky2 = np.meshgrid(kx**2, ky**2, indexing="ij")
    kr2 = kx2 + ky2
    keep = kr2 < k_lim**2  # also excludes evanescent modes (k_lim < k)
    power = np.abs(ft) ** 2
    total = float(power.sum())
    removed = 1.0 - float(power[keep].sum()) / total if total > 0 else 0.0
    if removed > max_clip:
        raise SamplingError(
            f"band-limited propagation would discard {removed:.2e} of the "
            f"power (walk-off past window/4 at |z| = {abs(z):.3g} m); "
            "enlarge the grid or reduce |z|")
    kz = np.sqrt(np.maximum(k**2 - kr2, 0.0))
    ft = np.where(keep, ft * np.exp(1j * z * kz), 0.0)
    out = scipy.fft.ifft2(ft, workers=fft_workers())
    return FieldGrid(out, focal.dx, focal.dy, focal.origin,
                     plane_z=focal.plane_z + z)


def lensing_ratio(tau_ripa: float, tau_aod: float) -> float:
    """Chirp-induced focal-shift ratio of this device to an AOD."""
    if tau_ripa <= 0 or tau_aod <= 0:
        raise ValueError("characteristic times must be positive")
    return tau_ripa / tau_aod / math.sqrt(6.0)


def chirp_defocus_analytic(geom: RipaGeometry, sweep_rate: float) -> float:
    """Thin-lens estimate of the chirp focal shift.

    The retarded drive phase across columns is quadratic,
    -pi rate (i T2)^2, equivalent to a lens of focal length
    p^2/(lambda rate T2^2) at the array; the focus of the focusing lens
    then shifts by -f^2 lambda rate T2^2 / p^2 (weak-lens limit).
    """
    t2 = geom.roundtrip_2 / 299_792_458.0
    return (-geom.focus_focal**2 * geom.wavelength * sweep_rate * t2**2
            / geom.mla_pitch**2)


def _column_refocus_metric(grid: FieldGrid) -> float:
    """Peak of the x-profile normalized by its own transverse power.

    The row (y) structure defocuses on its own as the plane moves and
    multiplies every x-profile equally; taking the best column slice and
    normalizing by its total power isolates how well the column phases
    have re-converged.
    """
    inten = grid.intensity
    iy = int(np.argmax(inten.max(axis=0)))
    profile = inten[:, iy]
    return float(profile.max() / profile.sum())


def chirp_defocus_numeric(geom: RipaGeometry, loss, sweep_rate: float,
                          z_max: float | None = None, n_z: int = 41,
                          grid_points: int = 256) -> float:
    """Axial shift of the column-interference focus under a linear chirp.

    Builds the instantaneous array with the column phase evaluated at the
    retarded time i*T2 under the chirp (a quadratic phase across columns),
    propagates the focal field axially, and returns the z where the column
    structure re-converges (the waist-trajectory minimum). The row
    structure's own defocus is normalized out; it stays anchored at z = 0
    and would otherwise dilute the shift of the full 3-D intensity maximum.
    """
    from .array_synthesis import Tone, synthesize_array
    from .config import C_LIGHT, derive_quantities

    if not math.isfinite(sweep_rate):
        raise ValueError("sweep_rate must be finite")
    dq = derive_quantities(geom)
    arr = synthesize_array(Tone(0.0), geom, loss)
    t2 = geom.roundtrip_2 / C_LIGHT
    i = np.arange(geom.n_cols)[:, None]
    arr.amplitudes = arr.amplitudes * np.exp(-1j * np.pi * sweep_rate
                                             * (i * t2) ** 2)

    bz = dq.bz_extent
    axis = np.linspace(-bz, bz, grid_points)  # 2-zone window: walk-off room
    field = focal_field_direct(arr, geom, axis, axis)
    grid = FieldGrid(field, axis[1] - axis[0], axis[1] - axis[0],
                     (axis[0], axis[0]))
    z_r = math.pi * dq.spot_waist**2 / geom.wavelength
    if z_max is None:
        z_max = max(2.0 * abs(chirp_defocus_analytic(geom, sweep_rate)),
                    0.3 * z_r)
    zs = np.linspace(-z_max, z_max, n_z)
    quality = np.array([_column_refocus_metric(
        propagate_axial(grid, z, geom.wavelength)) for z in zs])
    b = int(np.argmax(quality))
    if 0 < b < n_z - 1:  # parabolic vertex through the three top samples
        y0, y1, y2 = quality[b - 1], quality[b], quality[b + 1]
        denom = y0 - 2 * y1 + y2
        frac = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        return float(zs[b] + frac * (zs[1] - zs[0]))
    return float(zs[b])
