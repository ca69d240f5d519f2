"""Sweep-kernel backend selection.

The compiled Cython kernels are preferred; the pure-Python twin is used when
the extension was not built or when ``IMPLICITAD_PURE_PYTHON=1`` is set.
``get_kernels`` gives explicit access to either backend (the benchmark uses
it to time both on identical tapes).
"""

import os

from . import _sweeppy

try:
    from . import _sweepcore
except ImportError:
    _sweepcore = None

if _sweepcore is not None and os.environ.get("IMPLICITAD_PURE_PYTHON", "") != "1":
    _active = _sweepcore
else:
    _active = _sweeppy

HAS_COMPILED = _sweepcore is not None
ACTIVE_NAME = "compiled" if _active is _sweepcore else "python"


def get_kernels(name="active"):
    """Return the kernel module for ``name``: active, compiled or python."""
    if name == "active":
        return _active
    if name == "python":
        return _sweeppy
    if name == "compiled":
        if _sweepcore is None:
            raise RuntimeError("compiled sweep kernels are not available")
        return _sweepcore
    raise ValueError(f"unknown backend {name!r}")
