"""Quantitative performance metrics: crosstalk, uniformity, efficiency,
and the out-coupling/linewidth tradeoff."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from ._grating import lossy_grating_intensity
from .config import RipaGeometry, LossModel, derive_quantities, require_valid
from .errors import RangeError
from .focal_solver import SpotFit, gaussian_equiv_waist


@dataclass
class CrosstalkCurve:
    """Azimuthal-mean crosstalk vs normalized separation d/w0'."""

    separations: np.ndarray
    values: np.ndarray
    spot_waist: float
    n_cols: int
    n_rows: int
    a_x: float
    a_y: float

    def __post_init__(self):
        self.separations = np.asarray(self.separations, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.separations) <= 0):
            raise ValueError("separations must be strictly increasing")


def _site_power(centers_x, centers_y, s, weight, n_cols, n_rows, a_x, a_y, bz):
    """Gaussian-weighted power around (cx, cy) for the spot at the origin."""
    out = np.empty(len(centers_x))
    for k, (cx, cy) in enumerate(zip(centers_x, centers_y)):
        gx = lossy_grating_intensity((cx + s) / bz, n_cols, a_x)
        gy = lossy_grating_intensity((cy + s) / bz, n_rows, a_y)
        out[k] = float(np.sum(np.outer(gx, gy) * weight))
    return out


def crosstalk_at(geom: RipaGeometry, loss: LossModel | None,
                 separation: float, n_azimuth: int = 64,
                 quad_points: int = 61) -> float:
    """Crosstalk c(d) at separation d = separation * w0'.

    Integrates the addressed spot's intensity (per-axis lossy grating
    products) against a normalized Gaussian weight of waist w0' centered a
    distance d away, normalizes by the on-spot integral, and averages over
    n_azimuth directions. The weight is truncated at radius 3 w0' (beyond
    which its contribution is < 1e-7).
    """
    if separation <= 0:
        raise ValueError("separation must be positive")
    if n_azimuth < 8:
        raise ValueError("n_azimuth must be >= 8")
    dq = derive_quantities(geom)
    w = dq.spot_waist
    bz = dq.bz_extent
    a_x = loss.a_2 if loss is not None else 0.0
    a_y = loss.a_1 if loss is not None else 0.0
    s = np.linspace(-3 * w, 3 * w, quad_points)
    xx, yy = np.meshgrid(s, s, indexing="ij")
    weight = np.exp(-2 * (xx**2 + yy**2) / w**2)
    weight[xx**2 + yy**2 > (3 * w) ** 2] = 0.0
    ref = _site_power([0.0], [0.0], s, weight, geom.n_cols, geom.n_rows,
                      a_x, a_y, bz)[0]
    az = np.linspace(0.0, 2 * np.pi, n_azimuth, endpoint=False)
    d = separation * w
    vals = _site_power(d * np.cos(az), d * np.sin(az), s, weight,
                       geom.n_cols, geom.n_rows, a_x, a_y, bz)
    return float(vals.mean() / ref)


def crosstalk_curve(geom: RipaGeometry, loss: LossModel | None,
                    separations, n_azimuth: int = 64,
                    quad_points: int = 61) -> CrosstalkCurve:
    dq = derive_quantities(geom)
    vals = [crosstalk_at(geom, loss, d, n_azimuth, quad_points)
            for d in separations]
    return CrosstalkCurve(np.asarray(separations, float), np.asarray(vals),
                          dq.spot_waist, geom.n_cols, geom.n_rows,
                          loss.a_2 if loss else 0.0, loss.a_1 if loss else 0.0)


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    residual: float  # rms of log-log fit residuals
    n_points: int


def powerlaw_fit(curve: CrosstalkCurve, tail_range) -> PowerLawFit:
    """Least-squares slope of log c vs log d over tail_range = (lo, hi)."""
    lo, hi = tail_range
    mask = (curve.separations >= lo) & (curve.separations <= hi)
    if mask.sum() < 5:
        raise ValueError("need at least 5 curve points inside tail_range")
    vals = curve.values[mask]
    if np.any(vals <= 0):
        raise RangeError("crosstalk values must be positive for a log-log fit")
    lx = np.log(curve.separations[mask])
    ly = np.log(vals)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return PowerLawFit(float(slope), float(np.sqrt(np.mean(resid**2))),
                       int(mask.sum()))


def uniformity_stats(spot_fits) -> tuple[float, float, float]:
    """Relative standard deviations (peak intensity, w_x, w_y)."""
    if len(spot_fits) < 2:
        raise ValueError("need at least 2 spot fits")

    def rel_std(vals):
        vals = np.asarray(vals, dtype=float)
        return float(vals.std() / vals.mean())

    return (rel_std([f.peak for f in spot_fits]),
            rel_std([f.w_x for f in spot_fits]),
            rel_std([f.w_y for f in spot_fits]))


@dataclass(frozen=True)
class EfficiencyBudget:
    """Stage-by-stage power budget; eta_total is the exact product."""

    eta_1: float
    eta_rel: float
    eta_2: float
    eta_im: float
    eta_total: float
    a_1: float
    a_2: float

    def to_dict(self) -> dict:
        return {
            "first_stage_roundtrip_loss": self.a_1,
            "first_stage_efficiency": self.eta_1,
            "relay_efficiency": self.eta_rel,
            "second_stage_roundtrip_loss": self.a_2,
            "second_stage_efficiency": self.eta_2,
            "imaging_efficiency": self.eta_im,
            "total_efficiency": self.eta_total,
        }


def efficiency_budget(loss: LossModel, geom: RipaGeometry) -> EfficiencyBudget:
    """eta_1 = kappa_1 sum_j (1-A_1)^j, eta_2 likewise, total = product."""
    require_valid(geom, loss)
    eta_1 = loss.kappa_1 * sum((1 - loss.a_1) ** j for j in range(geom.n_rows))
    eta_2 = loss.kappa_2 * sum((1 - loss.a_2) ** i for i in range(geom.n_cols))
    eta_total = eta_1 * loss.relay_eff * eta_2 * loss.imaging_eff
    return EfficiencyBudget(eta_1, loss.relay_eff, eta_2, loss.imaging_eff,
                            eta_total, loss.a_1, loss.a_2)


@dataclass
class TradeoffCurve:
    """(kappa, efficiency, linewidth broadening R_w) samples."""

    kappa: np.ndarray
    efficiency: np.ndarray
    broadening: np.ndarray
    n: int
    internal_loss: float


def _core_waist(n: int, a_total: float, bz: float,
                samples: int = 4001) -> float:
    """1/e^2 waist of a Gaussian fitted to the peak core (above half max).

    The Gaussian approximation of the interference peak holds within about
    one waist of the center, so the fit is restricted to the half-max core.
    """
    w_guess = gaussian_equiv_waist(n, bz)
    x = np.linspace(-4 * w_guess, 4 * w_guess, samples)
    inten = lossy_grating_intensity(x / bz, n, a_total)
    pk = inten.max()
    mask = inten >= 0.5 * pk

    def gauss(xx, amp, width):
        return amp * np.exp(-2 * xx**2 / width**2)

    popt, _ = curve_fit(gauss, x[mask], inten[mask], p0=[pk, w_guess])
    return abs(float(popt[1]))


def tradeoff_curve(n: int, internal_loss: float, kappa_grid,
                   bz_extent: float = 156e-6) -> TradeoffCurve:
    """Power efficiency and linewidth broadening vs out-coupling ratio.

    efficiency(kappa) = kappa sum_{j<n} (1-kappa-l)^j; R_w is the fitted
    core waist of the lossy interference peak relative to the kappa -> 0
    limit at the same internal loss (so R_w(kappa -> 0) = 1 identically).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    kappa_grid = np.asarray(sorted(kappa_grid), dtype=float)
    if np.any(kappa_grid < 0) or np.any(kappa_grid + internal_loss >= 1.0):
        raise RangeError("each kappa must satisfy 0 <= kappa + loss < 1")
    w_ref = _core_waist(n, internal_loss, bz_extent)
    eff = np.empty(kappa_grid.size)
    rw = np.empty(kappa_grid.size)
    for k, kappa in enumerate(kappa_grid):
        a = kappa + internal_loss
        eff[k] = kappa * (1 - (1 - a) ** n) / a if a > 0 else 0.0
        rw[k] = _core_waist(n, a, bz_extent) / w_ref
    return TradeoffCurve(kappa_grid, eff, rw, n, internal_loss)
