"""Kernel backend selection.

The compiled extension is used when importable; setting the environment
variable ``TUGHARNACK_PURE=1`` forces the pure-Python fallback.
"""

from __future__ import annotations

import os

if os.environ.get("TUGHARNACK_PURE", "") not in ("", "0"):
    from . import _pycore as kernels
    NAME = "python"
else:
    try:
        from . import _core as kernels
        NAME = "cython"
    except ImportError:  # extension not built
        from . import _pycore as kernels
        NAME = "python"

dpp_sweep = kernels.dpp_sweep
LoopDetector = kernels.LoopDetector
find_loop = kernels.find_loop
planar_trials = kernels.planar_trials
