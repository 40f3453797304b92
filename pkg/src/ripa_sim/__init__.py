"""Desk-scale simulation toolkit for a re-imaging phased-array light modulator.

Subpackages map one-to-one onto the system: config (geometry, losses,
derived quantities), beam_optics (lens-guide ABCD analysis), array_synthesis
(tones to phased arrays), focal_solver (interference fields), drive_compiler
(pattern-to-tone compilation and the modulation chain), time_engine
(nanosecond dynamics), analysis (crosstalk/efficiency/tradeoff metrics),
calibration (interferometric phase-mask pipeline), cli (batch front-end).
"""

__version__ = "0.1.0"

from .config import (C_LIGHT, DerivedQuantities, LossModel, RipaGeometry,
                     derive_quantities, load_config, paper_geometry,
                     paper_losses, validate_config)

__all__ = [
    "C_LIGHT", "DerivedQuantities", "LossModel", "RipaGeometry",
    "derive_quantities", "load_config", "paper_geometry", "paper_losses",
    "validate_config", "__version__",
]
