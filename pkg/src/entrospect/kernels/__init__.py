"""Hot-loop kernels for tree building and scoring.

The compiled Cython module is preferred when it was built; the pure NumPy
module is the drop-in fallback. Both produce bit-identical results, so
which one loads never changes any output, only the runtime. Set
ENTROSPECT_PURE_KERNELS=1 to force the fallback.
"""

import os

if os.environ.get("ENTROSPECT_PURE_KERNELS") == "1":
    from . import pure as _impl

    IMPLEMENTATION = "pure"
else:
    try:
        from . import _speedups as _impl

        IMPLEMENTATION = "compiled"
    except ImportError:
        from . import pure as _impl

        IMPLEMENTATION = "pure"

build_tree = _impl.build_tree
predict_tree = _impl.predict_tree

__all__ = ["build_tree", "predict_tree", "IMPLEMENTATION"]
