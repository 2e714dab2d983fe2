"""Select the relation kernel: compiled extension when built, pure Python otherwise.

Set ``PORTHOS_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("PORTHOS_PURE_PYTHON") == "1":
    from ._relkernel_py import IMPLEMENTATION, MAX_EVENTS, BitRel
else:
    try:
        from ._relkernel import IMPLEMENTATION, MAX_EVENTS, BitRel
    except ImportError:
        from ._relkernel_py import IMPLEMENTATION, MAX_EVENTS, BitRel

__all__ = ["BitRel", "IMPLEMENTATION", "MAX_EVENTS"]
