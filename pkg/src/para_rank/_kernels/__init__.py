"""Kernel selection. The compiled extension is used when importable unless
``PARA_RANK_PURE=1`` is set; otherwise the numpy fallback is used.
"""

import os

from . import fallback

if os.environ.get("PARA_RANK_PURE", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _lstm as _compiled
    except ImportError:  # extension not built
        _compiled = None

if _compiled is not None:
    lstm_forward = _compiled.lstm_forward
    lstm_backward = _compiled.lstm_backward
    BACKEND = "compiled"
else:
    lstm_forward = fallback.lstm_forward
    lstm_backward = fallback.lstm_backward
    BACKEND = "python"

__all__ = ["BACKEND", "lstm_forward", "lstm_backward", "fallback"]
