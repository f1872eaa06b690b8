"""Monodromy propagation kernels.

``propagate`` is bound at import time to the compiled extension when it is
available, unless ``BLOCHSPEC_PURE_PYTHON=1`` forces the NumPy fallback.
Both backends run the same Fehlberg 7(8) scheme on the same tableau.
"""

import os

from . import fallback

if os.environ.get("BLOCHSPEC_PURE_PYTHON") == "1":
    _compiled = None
else:
    try:
        from . import _propagator as _compiled
    except ImportError:
        _compiled = None

if _compiled is not None:
    propagate = _compiled.propagate
    BACKEND = "compiled"
else:
    propagate = fallback.propagate
    BACKEND = "python"

STATUS_OK = fallback.STATUS_OK
STATUS_TOO_MANY_STEPS = fallback.STATUS_TOO_MANY_STEPS


def available_backends():
    """Map backend name -> propagate callable, for benchmarks and tests."""
    out = {"python": fallback.propagate}
    if _compiled is not None:
        out["compiled"] = _compiled.propagate
    return out
