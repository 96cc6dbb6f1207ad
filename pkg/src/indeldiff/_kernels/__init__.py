"""Hot-kernel backend selection.

At import time the compiled extension is preferred; the pure-numpy reference
is used when the extension is unavailable or when ``INDELDIFF_PURE`` is set.
Both backends expose ``corrupt_categories``, ``reverse_step_probs`` and
``sample_categorical`` with identical semantics.
"""

from __future__ import annotations

import os

from indeldiff._kernels import reference
from indeldiff._kernels.reference import KernelError  # noqa: F401  (re-exported)

_FORCE_PURE = os.environ.get("INDELDIFF_PURE", "") not in ("", "0")

if _FORCE_PURE:
    _impl = reference
    BACKEND = "reference"
else:
    try:
        from indeldiff._kernels import _fast as _impl  # type: ignore[no-redef]

        BACKEND = "fast"
    except ImportError:
        _impl = reference
        BACKEND = "reference"

corrupt_categories = _impl.corrupt_categories
reverse_step_probs = _impl.reverse_step_probs
sample_categorical = _impl.sample_categorical


def available_backends() -> dict[str, object]:
    """Name -> module for every importable backend (used by tests and the benchmark)."""
    out: dict[str, object] = {"reference": reference}
    try:
        from indeldiff._kernels import _fast

        out["fast"] = _fast
    except ImportError:
        pass
    return out
