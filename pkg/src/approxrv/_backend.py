"""Select the compiled kernel module or the pure-numpy fallback.

The compiled extension is preferred when importable.  Set the
environment variable ``APPROXRV_BACKEND`` to ``python`` or ``compiled``
to force a choice (forcing ``compiled`` raises if the build is absent).
"""

from __future__ import annotations

import os

from . import _kernels_py

_choice = os.environ.get("APPROXRV_BACKEND", "auto").lower()

if _choice == "python":
    kernels = _kernels_py
elif _choice == "compiled":
    from . import _kernels as kernels  # noqa: F401  (ImportError is the intended signal)
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _kernels_py


def backend_name() -> str:
    """'compiled' when the Cython kernels are active, else 'python'."""
    return "compiled" if kernels.COMPILED else "python"


def get_kernels(name: str | None = None):
    """Return a kernel module by name ('compiled', 'python', or active)."""
    if name in (None, "active"):
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
