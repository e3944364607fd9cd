"""Backend selection for the hot evaluation kernels.

The default backend is numba when it imports cleanly; set
``TREEGEMM_BACKEND=numpy`` (or ``numba``) to force one. Both produce
bit-identical outputs; `benchmarks/bench_backends.py` compares their speed.
"""

from __future__ import annotations

import os

from . import _kernels_np
from .errors import ConfigurationError

_ENV_FLAG = "TREEGEMM_BACKEND"

try:
    from . import _kernels_nb
except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
    _kernels_nb = None


def available_backends() -> list[str]:
    names = ["numpy"]
    if _kernels_nb is not None:
        names.insert(0, "numba")
    return names


def get_backend(name: str | None = None):
    """Resolve a kernel backend module by name or from the environment."""
    if name is None:
        name = os.environ.get(_ENV_FLAG, "").strip().lower() or None
    if name is None:
        name = "numba" if _kernels_nb is not None else "numpy"
    if name == "numpy":
        return _kernels_np
    if name == "numba":
        if _kernels_nb is None:
            raise ConfigurationError("numba backend requested but numba is not importable")
        return _kernels_nb
    raise ConfigurationError(f"unknown kernel backend {name!r}; expected 'numba' or 'numpy'")


def run_bundle(args, name: str | None = None, collect_trace: bool = False):
    """Dispatch a compiled-bundle run; traces always use the numpy path."""
    if collect_trace:
        return _kernels_np.run_bundle(*args, collect_trace=True)
    backend = get_backend(name)
    if backend is _kernels_np:
        return backend.run_bundle(*args)
    return (*backend.run_bundle(*args), None)


def walk_trees(args, name: str | None = None):
    return get_backend(name).walk_trees(*args)
