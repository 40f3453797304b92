"""Compilation of target patterns into tone sets and the synthesis chain.

Models the RF waveform driving the phase modulator, the resulting optical
sideband spectrum, and the flat-top optical filter that selects the +1
order. Detunings are defined post-filter, relative to the zero-phase
anchor; the RF carrier offset is absorbed into that definition.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import jv

from .array_synthesis import Tone, phase_pair, spot_position, wrap_phase
from .config import C_LIGHT, RipaGeometry, derive_quantities
from .errors import CollisionError, RangeError, SamplingError, ValidityError


@dataclass
class RfWaveform:
    """Sampled multi-tone RF drive, normalized to unit peak envelope."""

    sample_rate: float
    samples: np.ndarray
    tones: list


def rf_waveform(tones, rate: float, duration: float) -> RfWaveform:
    """V(t) = (1/sum A_k) sum A_k cos(2 pi v_k t + phi_k), sampled at rate."""
    if not tones:
        raise ValueError("empty tone set")
    f_max = max(abs(t.detuning) for t in tones)
    if rate <= 2.0 * f_max:
        raise SamplingError(
            f"sample rate {rate:.3g} Sa/s below Nyquist for {f_max:.3g} Hz")
    t = np.arange(0.0, duration, 1.0 / rate)
    total = sum(t_.amplitude for t_ in tones)
    if total == 0:
        raise ValueError("all tone amplitudes are zero")
    v = np.zeros_like(t)
    for tone in tones:
        v += tone.amplitude * np.cos(2 * np.pi * tone.detuning * t + tone.phase)
    return RfWaveform(rate, v / total, list(tones))


@dataclass
class SidebandSpectrum:
    """Optical lines as (offset from carrier in Hz, complex amplitude)."""

    lines: list[tuple[float, complex]]

    def __post_init__(self):
        self.lines = sorted(self.lines, key=lambda ln: ln[0])

    def total_power(self) -> float:
        return float(sum(abs(a) ** 2 for _, a in self.lines))

    def line_at(self, freq: float, tol: float = 1.0) -> complex:
        for f, a in self.lines:
            if abs(f - freq) <= tol:
                return a
        return 0.0 + 0.0j


def eom_spectrum(tones, beta: float, n_orders: int | None = None) -> SidebandSpectrum:
    """Sidebands of a phase modulator driven by the tone set.

    A single tone yields the full Bessel ladder i^n J_n(beta A) at offsets
    n*v. Several tones use per-tone first-order sidebands
    i J_1(beta A_k) prod_{k' != k} J_0(beta A_k') around a common carrier
    prod_k J_0(beta A_k); intermodulation products are neglected, which is
    accurate while beta * sum A_k < 0.5 (enforced).
    """
    if beta < 0:
        raise ValueError("modulation index must be >= 0")
    if not tones:
        raise ValueError("empty tone set")
    if len(tones) == 1:
        tone = tones[0]
        z = beta * tone.amplitude
        if n_orders is None:
            n_orders = max(8, int(math.ceil(z + 12)))
        lines = []
        for n in range(-n_orders, n_orders + 1):
            amp = (1j) ** n * jv(n, z) * np.exp(1j * n * tone.phase)
            lines.append((n * tone.detuning, complex(amp)))
        return SidebandSpectrum(lines)

    drive_sum = beta * sum(t.amplitude for t in tones)
    if drive_sum >= 0.5:
        raise ValidityError(
            f"multi-tone first-order expansion invalid: beta * sum A = "
            f"{drive_sum:.3g} >= 0.5")
    j0 = [jv(0, beta * t.amplitude) for t in tones]
    carrier = float(np.prod(j0))
    lines = [(0.0, complex(carrier))]
    for k, tone in enumerate(tones):
        rest = carrier / j0[k] if j0[k] != 0 else 0.0
        amp = 1j * jv(1, beta * tone.amplitude) * rest
        lines.append((+tone.detuning, complex(amp * np.exp(1j * tone.phase))))
        lines.append((-tone.detuning, complex(amp * np.exp(-1j * tone.phase))))
    return SidebandSpectrum(lines)


def filter_apply(spec: SidebandSpectrum, center: float,
                 bandwidth: float) -> SidebandSpectrum:
    """Second-order flat-top filter |H| = 1/sqrt(1 + ((v-c)/(b/2))^4)."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    out = []
    for f, a in spec.lines:
        h = 1.0 / math.sqrt(1.0 + ((f - center) / (bandwidth / 2.0)) ** 4)
        out.append((f, a * h))
    return SidebandSpectrum(out)


def tones_for_grid(n: int, geom: RipaGeometry,
                   variant: str = "quasi_square") -> list[Tone]:
    """Tone set addressing an n x n grid across the first zone.

    quasi_square: v_(i,j) = (2 i + j/n) FSR2, giving x spacing L/n and a
    row spacing 2L/R tilted by arctan(1/R) from orthogonal.
    orthogonal:  v_(i,j) = (i + j/n) FSR2 / (1 + 1/R^2), the square-grid
    variant for matched R = n designs.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    dq = derive_quantities(geom)
    if variant == "quasi_square":
        unit = dq.fsr_2
        freq = lambda i, j: (2.0 * i + j / n) * unit
    elif variant == "orthogonal":
        unit = dq.fsr_2 / (1.0 + 1.0 / dq.length_ratio**2)
        freq = lambda i, j: (1.0 * i + j / n) * unit
    else:
        raise ValueError("variant must be 'quasi_square' or 'orthogonal'")
    span = freq(n - 1, n - 1)
    if span >= dq.fsr_1:
        raise RangeError(
            f"{n}x{n} grid span {span:.4g} Hz exceeds one short-stage FSR "
            f"({dq.fsr_1:.4g} Hz)")
    return [Tone(freq(i, j)) for i in range(n) for j in range(n)]


def _wrapped_offset(value: float, period: float) -> float:
    return (value + period / 2.0) % period - period / 2.0


def tones_for_spots(targets, geom: RipaGeometry, channelized: bool = False,
                    amplitude: float = 1.0):
    """Inverse map: one tone per first-zone target position.

    Picks, per target, the detuning whose mapped position is nearest in the
    zone (Euclidean, wrap-aware). With channelized=True detunings snap to
    the f_res lattice and two targets claiming one channel raise
    CollisionError. Returns (tones, placement_errors) in meters.
    """
    dq = derive_quantities(geom)
    bz = dq.bz_extent
    tones: list[Tone] = []
    errors: list[float] = []
    channels: dict[int, int] = {}
    for t_idx, (x, y) in enumerate(targets):
        if abs(x) > bz / 2 or abs(y) > bz / 2:
            raise RangeError(f"target {t_idx} at ({x:.3g}, {y:.3g}) m lies "
                             "outside the first Brillouin zone")
        best = None
        if channelized:
            n_half = int(math.floor(dq.fsr_1 / 2.0 / dq.f_res))
            for ch in range(-n_half, n_half + 1):
                detuning = ch * dq.f_res
                xm, ym = spot_position(detuning, geom)
                err = math.hypot(_wrapped_offset(xm - x, bz),
                                 _wrapped_offset(ym - y, bz))
                if best is None or err < best[0]:
                    best = (err, detuning, ch)
            err, detuning, ch = best
            if ch in channels:
                raise CollisionError(
                    f"targets {channels[ch]} and {t_idx} both map to channel "
                    f"{ch} ({detuning:.4g} Hz)", indices=(channels[ch], t_idx))
            channels[ch] = t_idx
        else:
            # exact phi_x branch + perpendicular projection onto the raster line
            slope = dq.fsr_2 / dq.fsr_1  # dy/dx along the line, in zone units
            n_half = int(math.ceil(dq.length_ratio / 2.0)) + 1
            for m in range(-n_half, n_half + 1):
                nu0 = (x / bz + m) * dq.fsr_2
                if abs(nu0) > dq.fsr_1 / 2.0 + dq.fsr_2:
                    continue
                _, ym = spot_position(nu0, geom)
                dy = _wrapped_offset(ym - y, bz)
                # moving along the line by ds in x moves y by slope*ds
                ds = -dy * slope / (1.0 + slope**2)
                detuning = nu0 + ds / bz * dq.fsr_2
                xm, ym = spot_position(detuning, geom)
                err = math.hypot(_wrapped_offset(xm - x, bz),
                                 _wrapped_offset(ym - y, bz))
                if best is None or err < best[0]:
                    best = (err, detuning)
            err, detuning = best
        tones.append(Tone(detuning, amplitude))
        errors.append(err)
    return tones, errors


def compensate_envelope(tones, geom: RipaGeometry,
                        floor: float = 1e-3) -> list[Tone]:
    """Divide tone amplitudes by the envelope field at their spot positions.

    Equalizes ideal focal peak intensities across the addressed pattern;
    positions where the envelope has fallen below `floor` of its maximum
    are rejected (the boost would diverge).
    """
    dq = derive_quantities(geom)
    out = []
    for k, tone in enumerate(tones):
        x, y = spot_position(tone.detuning, geom)
        env = math.exp(-(x**2 + y**2) / dq.envelope_waist**2)
        if env < floor:
            raise RangeError(
                f"tone {k}: envelope field {env:.3g} below floor {floor:g} "
                f"at ({x:.3g}, {y:.3g}) m")
        out.append(Tone(tone.detuning, tone.amplitude / env, tone.phase))
    return out


class CalibrationTable:
    """Measured +1-order power vs (RF frequency, amplitude code).

    Built from a CSV with header freq_hz,amp_code,power_rel. Lookups
    interpolate linearly on the sampled grid; queries outside the sampled
    range are clamped with a warning. The identity chain corresponds to not
    using a table at all.
    """

    def __init__(self, freqs, codes, power):
        self.freqs = np.asarray(freqs, dtype=float)
        self.codes = np.asarray(codes, dtype=float)
        self.power = np.asarray(power, dtype=float)
        if self.power.shape != (self.freqs.size, self.codes.size):
            raise ValueError("power table shape must be (n_freqs, n_codes)")

    @classmethod
    def from_csv(cls, path) -> "CalibrationTable":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            expected = {"freq_hz", "amp_code", "power_rel"}
            if set(reader.fieldnames or ()) != expected:
                raise ValueError(f"calibration CSV must have columns {sorted(expected)}")
            for row in reader:
                rows.append((float(row["freq_hz"]), float(row["amp_code"]),
                             float(row["power_rel"])))
        freqs = sorted({r[0] for r in rows})
        codes = sorted({r[1] for r in rows})
        power = np.full((len(freqs), len(codes)), np.nan)
        fi = {f: i for i, f in enumerate(freqs)}
        ci = {c: i for i, c in enumerate(codes)}
        for f, c, p in rows:
            power[fi[f], ci[c]] = p
        if np.isnan(power).any():
            raise ValueError("calibration CSV must sample a full freq x code grid")
        return cls(freqs, codes, power)

    def _clamp(self, value, axis_vals, name):
        lo, hi = axis_vals[0], axis_vals[-1]
        if value < lo or value > hi:
            warnings.warn(f"calibration lookup {name}={value:g} outside "
                          f"[{lo:g}, {hi:g}]; clamped", stacklevel=3)
            return min(max(value, lo), hi)
        return value

    def power_rel(self, freq: float, code: float) -> float:
        f = self._clamp(freq, self.freqs, "freq_hz")
        c = self._clamp(code, self.codes, "amp_code")
        i = np.clip(np.searchsorted(self.freqs, f) - 1, 0, self.freqs.size - 2)
        j = np.clip(np.searchsorted(self.codes, c) - 1, 0, self.codes.size - 2)
        tf = ((f - self.freqs[i]) / (self.freqs[i + 1] - self.freqs[i]))
        tc = ((c - self.codes[j]) / (self.codes[j + 1] - self.codes[j]))
        p = (self.power[i, j] * (1 - tf) * (1 - tc)
             + self.power[i + 1, j] * tf * (1 - tc)
             + self.power[i, j + 1] * (1 - tf) * tc
             + self.power[i + 1, j + 1] * tf * tc)
        return float(p)

    def code_for_power(self, freq: float, target_rel: float) -> float:
        """Smallest amplitude code reaching the target relative power."""
        codes = np.linspace(self.codes[0], self.codes[-1], 512)
        powers = np.array([self.power_rel(freq, c) for c in codes])
        idx = np.where(powers >= target_rel)[0]
        if idx.size == 0:
            warnings.warn(f"target power {target_rel:g} unreachable at "
                          f"{freq:g} Hz; clamped to max code", stacklevel=2)
            return float(self.codes[-1])
        return float(codes[idx[0]])
