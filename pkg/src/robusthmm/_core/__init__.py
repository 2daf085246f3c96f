"""Dynamic-programming kernels with a compiled fast path.

The Cython extension ``_dp`` is used when it was built; otherwise the numpy
implementation in ``dp_py`` is selected at import.  :func:`use_backend`
switches explicitly (tests and the benchmark use it to compare both).
"""

import numpy as np

from . import dp_py

try:
    from . import _dp as _compiled
except ImportError:  # extension not built
    _compiled = None

_FUNCS = ("viterbi", "viterbi_pair", "forward_matrix", "backward_matrix")
_active = _compiled if _compiled is not None else dp_py


def available_backends():
    return ("compiled", "python") if _compiled is not None else ("python",)


def backend_name():
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def use_backend(name):
    """Select ``"compiled"`` or ``"python"``; returns the previous backend name."""
    global _active
    previous = backend_name()
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled DP core is not built")
        _active = _compiled
    elif name == "python":
        _active = dp_py
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def _c(a, ndim):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    return a


def viterbi(log_init, log_trans, log_emit):
    """Best path and its log score for an (N, S) emission score matrix."""
    return _active.viterbi(_c(log_init, 1), _c(log_trans, 2), _c(log_emit, 2))


def viterbi_pair(log_init, log_trans, log_emit_first, log_emit_pair):
    """Viterbi with emission scores ``log_emit_pair[n, q_prev, q]`` for n >= 1."""
    return _active.viterbi_pair(_c(log_init, 1), _c(log_trans, 2), _c(log_emit_first, 1),
                                _c(log_emit_pair, 3))


def forward_matrix(log_init, log_trans, log_emit):
    return _active.forward_matrix(_c(log_init, 1), _c(log_trans, 2), _c(log_emit, 2))


def backward_matrix(log_trans, log_emit):
    return _active.backward_matrix(_c(log_trans, 2), _c(log_emit, 2))
