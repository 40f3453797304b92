"""Nanosecond time-domain simulation of the modulator output.

Each drive channel is a complex baseband envelope s(t) = A(t) e^{-i theta(t)}
(theta integrates the instantaneous detuning, so frequency ramps are
phase-continuous). Beam (i, j) replays the envelope delayed by the
propagation time i*T2 + j*T1; with the focal kernel e^{-i 2 pi (ix+jy)/L}
used throughout the package, a delayed static tone reproduces exactly the
static phase ramp, making long-time traces identical to the static solver.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .array_synthesis import Tone
from .config import C_LIGHT, RipaGeometry, LossModel, derive_quantities, require_valid
from .errors import RangeError, ResourceLimitError, ShapeError
from .focal_solver import _envelope_factors

SEGMENT_KINDS = ("hold", "amplitude-step", "linear-frequency-ramp")


@dataclass(frozen=True)
class Segment:
    """One schedule entry of a drive channel.

    During [start, start + duration) the channel amplitude is `amplitude`
    and the detuning either stays at `detuning` (hold / amplitude-step) or
    ramps linearly to `detuning_end`. Outside all segments the channel is
    off (amplitude 0) while its phase keeps integrating.
    """

    start: float
    duration: float
    kind: str = "hold"
    amplitude: float = 1.0
    detuning: float = 0.0
    detuning_end: float | None = None

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"segment kind must be one of {SEGMENT_KINDS}")
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")
        if self.kind == "linear-frequency-ramp" and self.detuning_end is None:
            raise ValueError("frequency ramp needs detuning_end")

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def final_detuning(self) -> float:
        return (self.detuning_end if self.kind == "linear-frequency-ramp"
                else self.detuning)


@dataclass
class Channel:
    """Ordered, non-overlapping segments plus the channel's start phase."""

    segments: list
    phase: float = 0.0

    def __post_init__(self):
        segs = sorted(self.segments, key=lambda s: s.start)
        for a, b in zip(segs, segs[1:]):
            if b.start < a.end - 1e-15:
                raise ValueError("channel segments overlap")
        self.segments = segs


@dataclass
class DriveProgram:
    channels: list

    def max_abs_detuning(self) -> float:
        worst = 0.0
        for ch in self.channels:
            for seg in ch.segments:
                worst = max(worst, abs(seg.detuning), abs(seg.final_detuning))
        return worst

    def end_time(self) -> float:
        return max(seg.end for ch in self.channels for seg in ch.segments)


def static_program(tones) -> DriveProgram:
    """Channels holding each tone from t=0 'forever' (1 s)."""
    return DriveProgram([
        Channel([Segment(0.0, 1.0, "hold", t.amplitude, t.detuning)], t.phase)
        for t in tones])


class _PiecewiseEnvelope:
    """Vectorized (amplitude, phase) evaluation of one channel."""

    def __init__(self, channel: Channel):
        segs = channel.segments
        if not segs:
            raise ValueError("channel has no segments")
        # pieces: (t_start, amp, det0, slope); phase anchored at first start
        starts, amps, det0s, slopes = [], [], [], []

        def add(t0, amp, det0, slope):
            starts.append(t0)
            amps.append(amp)
            det0s.append(det0)
            slopes.append(slope)

        add(-math.inf, 0.0, segs[0].detuning, 0.0)
        prev_end, prev_det = segs[0].start, segs[0].detuning
        for seg in segs:
            if seg.start > prev_end:  # gap: off, detuning held
                add(prev_end, 0.0, prev_det, 0.0)
            slope = ((seg.final_detuning - seg.detuning) / seg.duration
                     if seg.kind == "linear-frequency-ramp" else 0.0)
            add(seg.start, seg.amplitude, seg.detuning, slope)
            prev_end, prev_det = seg.end, seg.final_detuning
        add(prev_end, 0.0, prev_det, 0.0)

        self.t0 = np.array(starts)
        self.amp = np.array(amps)
        self.det0 = np.array(det0s)
        self.slope = np.array(slopes)
        # cumulative phase (rad) at each piece start; anchor at first segment
        theta = np.zeros(len(starts))
        theta[1] = channel.phase
        for k in range(1, len(starts) - 1):
            dt_k = self.t0[k + 1] - self.t0[k]
            theta[k + 1] = theta[k] + 2 * np.pi * (
                self.det0[k] * dt_k + 0.5 * self.slope[k] * dt_k**2)
        # backward extension of the first (off) piece
        theta[0] = channel.phase  # evaluated relative to t0[1] below
        self.theta0 = theta

    def __call__(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.t0, t, side="right") - 1
        idx = np.clip(idx, 0, self.t0.size - 1)
        ref = np.where(idx == 0, self.t0[1], self.t0[idx])
        tau = t - ref
        theta = self.theta0[idx] + 2 * np.pi * (
            self.det0[idx] * tau + 0.5 * self.slope[idx] * tau**2)
        return self.amp[idx] * np.exp(-1j * theta)


@dataclass
class TimeTrace:
    """Intensity samples values[k] at times t0 + k*dt."""

    t0: float
    dt: float
    values: np.ndarray
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        self.values = np.asarray(self.values, dtype=float)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)


def _beam_delays_and_decay(geom: RipaGeometry, loss: LossModel | None):
    i = np.arange(geom.n_cols)[:, None]
    j = np.arange(geom.n_rows)[None, :]
    t2 = geom.roundtrip_2 / C_LIGHT
    t1 = geom.roundtrip_1 / C_LIGHT
    delays = (i * t2 + j * t1).ravel()
    rx = math.sqrt(1.0 - (loss.a_2 if loss else 0.0))
    ry = math.sqrt(1.0 - (loss.a_1 if loss else 0.0))
    decay = (rx**i * ry**j).astype(complex).ravel()
    return delays, decay


def _point_kernel(geom: RipaGeometry, x, y):
    """Per-beam complex weights at focal points; matches focal_field_direct."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    bz = geom.bz_extent
    lam_f = geom.wavelength * geom.focus_focal
    i = np.arange(geom.n_cols)
    j = np.arange(geom.n_rows)
    ex = np.exp(-2j * np.pi * np.multiply.outer(i, x) / bz)  # (n_cols, npts)
    ey = np.exp(-2j * np.pi * np.multiply.outer(j, y) / bz)
    kern = (ex[:, None, :] * ey[None, :, :]).reshape(-1, x.size)
    cx, cy = (geom.n_cols - 1) / 2.0, (geom.n_rows - 1) / 2.0
    center = np.exp(2j * np.pi * (cx * x + cy * y) / bz)
    gx, gy = _envelope_factors(geom, geom.mode_waist, x, y, "hg00")
    return kern * (center * gx * gy / lam_f)[None, :]


def _check_program(prog: DriveProgram, geom: RipaGeometry):
    dq = derive_quantities(geom)
    worst = prog.max_abs_detuning()
    if worst > dq.fsr_1 / 2.0 + 1e-9:
        raise RangeError(f"program detuning {worst:.4g} Hz outside "
                         f"+-FSR1/2 = {dq.fsr_1 / 2:.4g} Hz")


def point_trace(prog: DriveProgram, geom: RipaGeometry,
                loss: LossModel | None, point, dt: float,
                t_span) -> TimeTrace:
    """Raw (pre-detector) intensity vs time at one focal-plane point."""
    require_valid(geom, loss)
    _check_program(prog, geom)
    t_start, t_stop = t_span
    if t_stop <= t_start:
        raise ValueError("t_span must be increasing")
    t = np.arange(t_start, t_stop, dt)
    delays, decay = _beam_delays_and_decay(geom, loss)
    kern = _point_kernel(geom, point[0], point[1])[:, 0]
    weights = decay * kern
    shifted = t[None, :] - delays[:, None]
    fld = np.zeros(t.size, dtype=complex)
    for ch in prog.channels:
        env = _PiecewiseEnvelope(ch)
        fld += weights @ env(shifted)
    trace = TimeTrace(t_start, dt, np.abs(fld) ** 2)
    buildup = (geom.n_cols - 1) * geom.roundtrip_2 / C_LIGHT
    if t_stop - t_start < buildup:
        msg = (f"trace span {t_stop - t_start:.3g} s shorter than the "
               f"{buildup:.3g} s array buildup time")
        trace.warnings.append(msg)
        warnings.warn(msg, stacklevel=2)
    return trace


def region_trace(prog: DriveProgram, geom: RipaGeometry,
                 loss: LossModel | None, center, half_width: float,
                 dt: float, t_span, resolution: float = 5e-6) -> TimeTrace:
    """Intensity integrated over a square detection window (pre-detector)."""
    require_valid(geom, loss)
    _check_program(prog, geom)
    t_start, t_stop = t_span
    t = np.arange(t_start, t_stop, dt)
    n_side = max(2, int(round(2 * half_width / resolution)) + 1)
    xs = np.linspace(center[0] - half_width, center[0] + half_width, n_side)
    ys = np.linspace(center[1] - half_width, center[1] + half_width, n_side)
    xg, yg = np.meshgrid(xs, ys, indexing="ij")
    delays, decay = _beam_delays_and_decay(geom, loss)
    kern = _point_kernel(geom, xg.ravel(), yg.ravel()) * decay[:, None]
    shifted = t[None, :] - delays[:, None]
    total = np.zeros(t.size)
    fld = np.zeros((xg.size, t.size), dtype=complex)
    for ch in prog.channels:
        env = _PiecewiseEnvelope(ch)
        fld += kern.T @ env(shifted)
    area = (xs[1] - xs[0]) * (ys[1] - ys[0])
    total = np.sum(np.abs(fld) ** 2, axis=0) * area
    return TimeTrace(t_start, dt, total)


def pd_filter(trace: TimeTrace, f3db: float) -> TimeTrace:
    """Single-pole low-pass (photodetector model), exact ZOH recurrence."""
    if f3db <= 0:
        raise ValueError("f3db must be positive")
    alpha = 1.0 - math.exp(-2.0 * math.pi * f3db * trace.dt)
    out = lfilter([alpha], [1.0, alpha - 1.0], trace.values)
    return TimeTrace(trace.t0, trace.dt, out, list(trace.warnings))


def _cross_time(t, v, level, rising, start=0):
    if rising:
        hits = np.where((v[start:-1] < level) & (v[start + 1:] >= level))[0]
    else:
        hits = np.where((v[start:-1] > level) & (v[start + 1:] <= level))[0]
    if hits.size == 0:
        return None
    i = hits[0] + start
    frac = (level - v[i]) / (v[i + 1] - v[i])
    return t[i] + frac * (t[i + 1] - t[i])


def rise_fall(trace: TimeTrace, lo: float = 0.1, hi: float = 0.9):
    """(rise, fall) between lo/hi fractions of the settled plateau."""
    v = trace.values
    t = trace.times
    pk = v.max()
    if pk <= 0:
        raise ShapeError("trace has no pulse")
    plateau = float(np.median(v[v >= 0.9 * pk]))
    lo_l, hi_l = lo * plateau, hi * plateau
    t_lo = _cross_time(t, v, lo_l, rising=True)
    t_hi = _cross_time(t, v, hi_l, rising=True)
    if t_lo is None or t_hi is None:
        raise ShapeError("rising thresholds never crossed")
    peak_idx = int(np.argmax(v >= 0.9 * plateau))
    t_hi_f = _cross_time(t, v, hi_l, rising=False, start=peak_idx)
    t_lo_f = _cross_time(t, v, lo_l, rising=False, start=peak_idx)
    if t_hi_f is None or t_lo_f is None:
        raise ShapeError("falling thresholds never crossed")
    return t_hi - t_lo, t_lo_f - t_hi_f


@dataclass
class Movie:
    """Stack of intensity frames on a fixed spatial grid."""

    times: np.ndarray
    x_axis: np.ndarray
    y_axis: np.ndarray
    frames: np.ndarray  # (n_frames, nx, ny)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("frame times must be strictly increasing")
        if self.frames.shape != (self.times.size, self.x_axis.size,
                                 self.y_axis.size):
            raise ValueError("frames shape must be (n_frames, nx, ny)")


def simulate_movie(prog: DriveProgram, geom: RipaGeometry,
                   loss: LossModel | None, frame_times,
                   half_width: float | None = None,
                   resolution: float = 5e-6,
                   max_samples: int = 50_000_000) -> Movie:
    """Frame-by-frame intensity maps (scanning-detector emulation).

    Frames are computed independently at the requested times; each pixel is
    exactly point_trace evaluated at that instant.
    """
    require_valid(geom, loss)
    _check_program(prog, geom)
    frame_times = np.asarray(sorted(frame_times), dtype=float)
    if half_width is None:
        half_width = geom.bz_extent / 2.0
    n_side = max(2, int(round(2 * half_width / resolution)) + 1)
    if frame_times.size * n_side * n_side > max_samples:
        raise ResourceLimitError(
            f"{frame_times.size} frames x {n_side}^2 pixels exceeds the "
            f"{max_samples} sample cap")
    axis = np.linspace(-half_width, half_width, n_side)
    xg, yg = np.meshgrid(axis, axis, indexing="ij")
    delays, decay = _beam_delays_and_decay(geom, loss)
    kern = _point_kernel(geom, xg.ravel(), yg.ravel()) * decay[:, None]
    envs = [_PiecewiseEnvelope(ch) for ch in prog.channels]
    frames = np.empty((frame_times.size, n_side, n_side))
    for fi, tf in enumerate(frame_times):
        fld = np.zeros(xg.size, dtype=complex)
        for env in envs:
            fld += kern.T @ env(tf - delays)
        frames[fi] = (np.abs(fld) ** 2).reshape(n_side, n_side)
    return Movie(frame_times, axis, axis.copy(), frames)


@dataclass
class SpotPath:
    """Tracked trajectory of one spot across movie frames."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    confidence: np.ndarray
    flagged: np.ndarray  # association ambiguous at these samples


def _frame_peaks(frame, x_axis, y_axis, floor):
    peaks = []
    for ix in range(1, frame.shape[0] - 1):
        for iy in range(1, frame.shape[1] - 1):
            v = frame[ix, iy]
            if v < floor:
                continue
            patch = frame[ix - 1:ix + 2, iy - 1:iy + 2]
            if v < patch.max():
                continue
            # parabolic sub-pixel refinement per axis
            def vertex(a, b, c):
                den = a - 2 * b + c
                return 0.5 * (a - c) / den if den != 0 else 0.0
            fx = vertex(frame[ix - 1, iy], v, frame[ix + 1, iy])
            fy = vertex(frame[ix, iy - 1], v, frame[ix, iy + 1])
            peaks.append((x_axis[ix] + fx * (x_axis[1] - x_axis[0]),
                          y_axis[iy] + fy * (y_axis[1] - y_axis[0]), v))
    return peaks


def extract_trajectories(movie: Movie, threshold: float = 0.3,
                         min_separation: float | None = None,
                         max_jump: float | None = None) -> list[SpotPath]:
    """Per-frame peak detection + greedy nearest-neighbour association.

    Paths crossing closer than min_separation are flagged, never silently
    swapped. Confidence is the peak height relative to the movie maximum.
    """
    floor = threshold * movie.frames.max()
    if max_jump is None:
        max_jump = 0.5 * (movie.x_axis[-1] - movie.x_axis[0])
    live: list[dict] = []
    done: list[dict] = []
    for fi, tf in enumerate(movie.times):
        peaks = _frame_peaks(movie.frames[fi], movie.x_axis, movie.y_axis,
                             floor)
        claims = []
        for pi, (px, py, pv) in enumerate(peaks):
            for li, path in enumerate(live):
                d = math.hypot(px - path["x"][-1], py - path["y"][-1])
                if d <= max_jump:
                    claims.append((d, li, pi))
        claims.sort(key=lambda c: c[0])
        used_paths, used_peaks = set(), set()
        matches = {}
        for d, li, pi in claims:
            if li in used_paths or pi in used_peaks:
                continue
            used_paths.add(li)
            used_peaks.add(pi)
            matches[li] = pi
        flagged_now = set()
        if min_separation is not None:
            for a in range(len(peaks)):
                for b in range(a + 1, len(peaks)):
                    if math.hypot(peaks[a][0] - peaks[b][0],
                                  peaks[a][1] - peaks[b][1]) < min_separation:
                        flagged_now.update((a, b))
            if len(peaks) < len(live):  # merged spots: every claimant ambiguous
                flagged_now.update(range(len(peaks)))
        survivors = []
        for li, path in enumerate(live):
            if li in matches:
                pi = matches[li]
                px, py, pv = peaks[pi]
                path["t"].append(tf)
                path["x"].append(px)
                path["y"].append(py)
                path["c"].append(pv)
                path["f"].append(pi in flagged_now)
                survivors.append(path)
            else:
                done.append(path)
        live = survivors
        for pi, (px, py, pv) in enumerate(peaks):
            if pi not in used_peaks:
                live.append({"t": [tf], "x": [px], "y": [py], "c": [pv],
                             "f": [pi in flagged_now]})
    done.extend(live)
    peak_ref = movie.frames.max()
    return [SpotPath(np.array(p["t"]), np.array(p["x"]), np.array(p["y"]),
                     np.array(p["c"]) / peak_ref, np.array(p["f"], dtype=bool))
            for p in done if len(p["t"]) > 0]
