"""Backend selection for the per-particle kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation.  ``LGFPF_BACKEND=python`` forces the fallback.
"""

import importlib
import os

from . import _kernels_py

_FUNCTIONS = (
    "assemble_phase",
    "assemble_matrix",
    "assemble_quat",
    "gain_phase",
    "gain_matrix",
    "gain_quat",
    "heun_phase",
    "heun_quat",
    "heun_matrix",
    "quat_to_rotation",
    "advance_quat",
    "assemble_fourier",
    "heun_fourier",
)


def load(name=None):
    """Return the kernel module called ``name`` (``"cython"`` or ``"python"``).

    With ``name=None`` the best available backend is returned.
    """
    if name == "python":
        return _kernels_py
    try:
        return importlib.import_module("lgfpf._kernels")
    except ImportError:
        if name == "cython":
            raise
        return _kernels_py


def available():
    names = ["python"]
    try:
        load("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


_active = load(os.environ.get("LGFPF_BACKEND") or None)
BACKEND = _active.NAME

for _name in _FUNCTIONS:
    globals()[_name] = getattr(_active, _name)
