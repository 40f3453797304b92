"""Closed-form per-axis interference sums for geometric beam arrays.

The field of n beams with amplitude ratio q between neighbours is the
geometric series sum_{i<n} q^i with q = r exp(i theta); the uniform-array
grating function sin^2(n theta/2)/sin^2(theta/2) is the r -> 1 limit. The
singularity at q == 1 is removable (value n).
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def geometric_sum(q, n: int):
    """sum_{i=0}^{n-1} q^i with the removable q==1 limit handled. Vectorized."""
    q = np.asarray(q, dtype=complex)
    den = 1.0 - q
    safe = np.where(np.abs(den) < _EPS, 1.0, den)
    out = (1.0 - q**n) / safe
    return np.where(np.abs(den) < _EPS, complex(n), out)


def lossy_grating_field(u, n: int, a_total: float, phase_offset=0.0):
    """Complex per-axis sum at normalized coordinate u = (x - x0)/L.

    Each successive beam carries e^{2 pi i u} of geometric phase relative to
    the previous one and sqrt(1 - a_total) of field decay (a_total is the
    per-round-trip power loss).
    """
    r = np.sqrt(1.0 - a_total)
    theta = 2.0 * np.pi * np.asarray(u, dtype=float) + phase_offset
    return geometric_sum(r * np.exp(1j * theta), n)


def lossy_grating_intensity(u, n: int, a_total: float = 0.0):
    """|lossy_grating_field|^2; equals the grating function when lossless."""
    out = np.abs(lossy_grating_field(u, n, a_total)) ** 2
    return out if out.shape else float(out)
