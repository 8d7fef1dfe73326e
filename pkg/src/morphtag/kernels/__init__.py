"""Hot numeric kernels with two interchangeable backends.

At import time the compiled Cython extension is preferred; the pure-numpy
fallback in `pykern` is used when the extension is missing or when the
environment variable MORPHTAG_PURE_PYTHON is set.  Both backends implement
the same signatures and pass the same test suite.
"""

import os

from morphtag.kernels import pykern as _py

if os.environ.get("MORPHTAG_PURE_PYTHON"):
    _impl = _py
else:
    try:
        from morphtag.kernels import _ckern as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _py

BACKEND = "python" if _impl is _py else "compiled"

lstm_cell_forward = _impl.lstm_cell_forward
lstm_cell_backward = _impl.lstm_cell_backward
crf_log_partition = _impl.crf_log_partition
crf_marginals = _impl.crf_marginals
crf_viterbi = _impl.crf_viterbi
bp_run = _impl.bp_run


def available_backends():
    """Name -> module for every importable backend (used by tests and benchmarks)."""
    backends = {"python": _py}
    try:
        from morphtag.kernels import _ckern
        backends["compiled"] = _ckern
    except ImportError:
        pass
    return backends
