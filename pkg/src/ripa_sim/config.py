"""Physical parameter set and derived system quantities.

All quantities are SI (meters, seconds, hertz, radians) throughout the
package; there is no unit-conversion layer. The speed of light is exact.

Geometry conventions: the second (long) stage displaces beams along x and
contributes ``n_cols`` columns (index i); the first (short) stage displaces
along y and contributes ``n_rows`` rows (index j). Positive detuning moves
the focal spot toward +x/+y.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace

from .errors import ConfigError

C_LIGHT = 299_792_458.0  # m/s, exact


@dataclass(frozen=True)
class RipaGeometry:
    """Lengths, counts and the focusing lens of the two-stage system.

    Parameters
    ----------
    wavelength : float
        Optical wavelength (m).
    mla_pitch : float
        Microlens-array pitch p (m); also the beam-array pitch.
    mla_focal : float
        Microlens focal length (m).
    roundtrip_1, roundtrip_2 : float
        Round-trip path lengths of the short (y) and long (x) stages (m).
    n_rows : int
        Number of beams along y (short-stage round trips).
    n_cols : int
        Number of beams along x (long-stage round trips).
    focus_focal : float
        Focal length of the output focusing lens (m).
    mode_waist_override : float, optional
        Use this lens-guide mode waist instead of the half-confocal value
        sqrt(mla_focal * wavelength / pi).
    half_confocal : bool
        Assert |roundtrip_1 - 2 mla_focal| within ``half_confocal_tol``.
    half_confocal_tol : float
        Relative tolerance of that assertion (default 1%).
    """

    wavelength: float = 780e-9
    mla_pitch: float = 1e-3
    mla_focal: float = 47e-3
    roundtrip_1: float = 9.4e-2
    roundtrip_2: float = 2.31
    n_rows: int = 9
    n_cols: int = 8
    focus_focal: float = 200e-3
    mode_waist_override: float | None = None
    half_confocal: bool = True
    half_confocal_tol: float = 0.01

    @property
    def mode_waist(self) -> float:
        if self.mode_waist_override is not None:
            return self.mode_waist_override
        return math.sqrt(self.mla_focal * self.wavelength / math.pi)

    @property
    def bz_extent(self) -> float:
        """Spatial period L of the focal interference pattern (m)."""
        return self.focus_focal * self.wavelength / self.mla_pitch


@dataclass(frozen=True)
class LossModel:
    """Per-round-trip loss fractions and relay/imaging efficiencies.

    ``a_1 = kappa_1 + loss_1`` and ``a_2 = kappa_lock + kappa_2 + loss_2``
    are the total power losses per round trip of the two stages.
    """

    kappa_1: float = 0.029
    loss_1: float = 0.022
    kappa_2: float = 0.068
    loss_2: float = 0.033
    kappa_lock: float = 0.097
    relay_eff: float = 0.706
    imaging_eff: float = 0.85

    @property
    def a_1(self) -> float:
        return self.kappa_1 + self.loss_1

    @property
    def a_2(self) -> float:
        return self.kappa_lock + self.kappa_2 + self.loss_2


@dataclass(frozen=True)
class DerivedQuantities:
    """Closed-form system quantities derived from a RipaGeometry."""

    fsr_1: float
    fsr_2: float
    f_res: float
    bz_extent: float
    mode_waist: float
    spot_waist: float
    envelope_waist: float
    zone_count: float
    length_ratio: float

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def validate_config(geom: RipaGeometry, loss: LossModel | None = None) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    diags: list[str] = []
    for name in ("wavelength", "mla_pitch", "mla_focal", "roundtrip_1",
                 "roundtrip_2", "focus_focal"):
        if not getattr(geom, name) > 0:
            diags.append(f"{name}: length must be strictly positive")
    for name in ("n_rows", "n_cols"):
        if not (isinstance(getattr(geom, name), int) and getattr(geom, name) >= 1):
            diags.append(f"{name}: count must be an integer >= 1")
    if geom.mode_waist_override is not None and not geom.mode_waist_override > 0:
        diags.append("mode_waist_override: length must be strictly positive")
    if geom.roundtrip_2 > 0 and geom.roundtrip_1 > 0:
        if geom.roundtrip_2 <= geom.roundtrip_1:
            diags.append("roundtrip_2: separation of scales violated "
                         "(roundtrip_2 must exceed roundtrip_1)")
        if geom.half_confocal and geom.mla_focal > 0:
            dev = abs(geom.roundtrip_1 - 2 * geom.mla_focal) / (2 * geom.mla_focal)
            if dev > geom.half_confocal_tol:
                diags.append(
                    f"roundtrip_1: half-confocal assertion violated "
                    f"(|L_rt1 - 2 f_mla| / 2 f_mla = {dev:.3g} > "
                    f"{geom.half_confocal_tol:g})")

    if loss is not None:
        for name in ("kappa_1", "loss_1", "kappa_2", "loss_2", "kappa_lock",
                     "relay_eff", "imaging_eff"):
            v = getattr(loss, name)
            if not (0.0 <= v < 1.0):
                diags.append(f"{name}: fraction out of range [0, 1)")
        if not loss.a_1 < 1.0:
            diags.append("a_1: per-stage total kappa_1 + loss_1 must be < 1")
        if not loss.a_2 < 1.0:
            diags.append("a_2: per-stage total kappa_lock + kappa_2 + loss_2 "
                         "must be < 1")
    return diags


def require_valid(geom: RipaGeometry, loss: LossModel | None = None) -> None:
    diags = validate_config(geom, loss)
    if diags:
        raise ConfigError("; ".join(diags))


def derive_quantities(geom: RipaGeometry) -> DerivedQuantities:
    """Populate every closed-form derived quantity. Pure and deterministic."""
    require_valid(geom)
    fsr_1 = C_LIGHT / geom.roundtrip_1
    fsr_2 = C_LIGHT / geom.roundtrip_2
    w0 = geom.mode_waist
    bz = geom.bz_extent
    w_env = geom.wavelength * geom.focus_focal / (math.pi * w0)
    n = geom.n_rows
    if n >= 2:
        spot = bz * math.sqrt(6.0 / (math.pi**2 * (n**2 - 1)))
    else:
        spot = w_env  # single beam: no interference narrowing
    return DerivedQuantities(
        fsr_1=fsr_1,
        fsr_2=fsr_2,
        f_res=fsr_2 / geom.n_cols,
        bz_extent=bz,
        mode_waist=w0,
        spot_waist=spot,
        envelope_waist=w_env,
        zone_count=w_env / bz,
        length_ratio=geom.roundtrip_2 / geom.roundtrip_1,
    )


def paper_geometry(**overrides) -> RipaGeometry:
    """The reference device geometry used throughout the docs and tests."""
    return replace(RipaGeometry(), **overrides)


def paper_losses(**overrides) -> LossModel:
    return replace(LossModel(), **overrides)


_GEOM_FIELDS = {f.name for f in fields(RipaGeometry)}
_LOSS_FIELDS = {f.name for f in fields(LossModel)}
_INT_FIELDS = {"n_rows", "n_cols"}


def _build(section: str, data: dict, cls, known: set):
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _INT_FIELDS:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{section}.{key}: expected an integer")
        kwargs[key] = value
    return cls(**kwargs)


def load_config(path) -> tuple[RipaGeometry, LossModel]:
    """Read a JSON config file with 'geometry' and 'loss' sections.

    Keys must exactly match the dataclass field names; unknown keys are
    rejected. Missing keys fall back to the reference defaults.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - {"geometry", "loss"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    geom = _build("geometry", raw.get("geometry", {}), RipaGeometry, _GEOM_FIELDS)
    loss = _build("loss", raw.get("loss", {}), LossModel, _LOSS_FIELDS)
    require_valid(geom, loss)
    return geom, loss


def config_to_dict(geom: RipaGeometry, loss: LossModel) -> dict:
    return {
        "geometry": {f.name: getattr(geom, f.name) for f in fields(RipaGeometry)},
        "loss": {f.name: getattr(loss, f.name) for f in fields(LossModel)},
    }
