"""Backend selection for the statevector hot loops.

The compiled ``_kernels`` extension is used when it imports; otherwise the
NumPy implementation in ``_pykernels`` is used. Set ``QNNEXTRACT_BACKEND`` to
``python`` or ``cython`` to force one (forcing ``cython`` when the extension
is missing raises ``ImportError``).
"""

import os

from . import _pykernels

_forced = os.environ.get("QNNEXTRACT_BACKEND", "").strip().lower()

_compiled = None
if _forced != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        if _forced == "cython":
            raise
        _compiled = None

_impl = _compiled if _compiled is not None else _pykernels
BACKEND = "cython" if _compiled is not None else "python"


def get_backend(name=None):
    """Return the kernel module for ``name`` (``None`` means the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])


apply_layers = _impl.apply_layers
apply_layers_inverse = _impl.apply_layers_inverse
adjoint_gradient = _impl.adjoint_gradient
z_expectations = _impl.z_expectations
