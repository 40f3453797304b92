"""Worker-count control for parallelizable numerics (RIPA_SIM_THREADS)."""

import os

from .errors import ConfigError


def fft_workers() -> int:
    """FFT worker count; defaults to 1 so artifact bytes are reproducible."""
    raw = os.environ.get("RIPA_SIM_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"RIPA_SIM_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("RIPA_SIM_THREADS must be >= 1")
    return min(n, os.cpu_count() or 1)
