"""Backend selection for the hot kernels.

The compiled extension (`panelift._ckernels`, Cython) is used when it
imported cleanly; otherwise the pure-numpy fallback takes over. Set
``PANELIFT_BACKEND=python`` to force the fallback (useful for
benchmarking and debugging), or ``PANELIFT_BACKEND=c`` to insist on the
compiled backend and fail loudly when it is missing.

Both backends produce bit-identical results for split search and
inversion counting; the OLS moment kernels differ only in summation
compensation (Kahan in C, pairwise in numpy) at the last-ulp level.
"""

from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built on this install
    _ckernels = None

_requested = os.environ.get("PANELIFT_BACKEND", "").strip().lower()
if _requested not in ("", "c", "python"):
    raise RuntimeError(
        f"PANELIFT_BACKEND must be 'c' or 'python', got {_requested!r}"
    )
if _requested == "c" and _ckernels is None:
    raise RuntimeError(
        "PANELIFT_BACKEND=c but the compiled extension is not available; "
        "reinstall with a C toolchain or unset PANELIFT_BACKEND"
    )

if _requested == "python" or _ckernels is None:
    _impl = _pykernels
    BACKEND = "python"
else:
    _impl = _ckernels
    BACKEND = "c"

ols_moments = _impl.ols_moments
count_inversions = _impl.count_inversions
scan_feature_splits = _impl.scan_feature_splits


def get_backend() -> str:
    """Name of the active kernel backend ('c' or 'python')."""
    return BACKEND


def available_backends() -> dict:
    """Importable kernel modules keyed by backend name."""
    out = {"python": _pykernels}
    if _ckernels is not None:
        out["c"] = _ckernels
    return out
