"""Select the compiled sweep kernels when available.

Set ``VOLTERRA_ROUGH_BACKEND=python`` to force the numpy fallback.
"""

from __future__ import annotations

import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)


def _load():
    if os.environ.get("VOLTERRA_ROUGH_BACKEND", "").lower() == "python":
        return _pykernels
    try:
        from . import _ckernels
    except ImportError:
        log.debug("compiled kernels unavailable, using the numpy fallback")
        return _pykernels
    return _ckernels


core = _load()
python = _pykernels
NAME = core.BACKEND_NAME
