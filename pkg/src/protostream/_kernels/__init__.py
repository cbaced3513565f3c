"""Kernel lane selection.

The compiled extension is preferred when importable; the NumPy/Python
fallback is otherwise used transparently. Set PROTOSTREAM_KERNELS=python or
=native to force a lane (native raises if the extension is missing, instead
of silently degrading).
"""

import os

_requested = os.environ.get("PROTOSTREAM_KERNELS", "auto").lower()
if _requested not in ("auto", "native", "python"):
    raise RuntimeError(f"PROTOSTREAM_KERNELS must be auto|native|python, got {_requested!r}")

BACKEND = "python"
if _requested in ("auto", "native"):
    try:
        from protostream._kernels._native import dbscan_from_dist, pairwise_sqeuclidean

        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise RuntimeError(
                "PROTOSTREAM_KERNELS=native but the compiled extension is not "
                "built; run `pip install -e . --no-build-isolation`"
            ) from None

if BACKEND == "python":
    from protostream._kernels._py import dbscan_from_dist, pairwise_sqeuclidean

__all__ = ["BACKEND", "dbscan_from_dist", "pairwise_sqeuclidean"]
