"""Closed-loop integration kernel with selectable backend.

Two implementations share one calling convention: `_fast` (Cython) and
`_ref` (pure Python composed from the public plant/control pieces).  The
compiled kernel is preferred when the extension built; set
PALMTHERM_KERNEL=python to force the reference implementation (the
benchmark and the backend-equivalence tests do).
"""

import os

_forced = os.environ.get("PALMTHERM_KERNEL", "").strip().lower()

if _forced in ("python", "ref"):
    from palmtherm._kernel._ref import run_closed_loop
    KERNEL_BACKEND = "python"
elif _forced in ("compiled", "fast", "c"):
    from palmtherm._kernel._fast import run_closed_loop  # hard import on request
    KERNEL_BACKEND = "compiled"
elif _forced:
    raise ValueError(f"PALMTHERM_KERNEL={_forced!r} not recognized")
else:
    try:
        from palmtherm._kernel._fast import run_closed_loop
        KERNEL_BACKEND = "compiled"
    except ImportError:
        from palmtherm._kernel._ref import run_closed_loop
        KERNEL_BACKEND = "python"

__all__ = ["run_closed_loop", "KERNEL_BACKEND"]
