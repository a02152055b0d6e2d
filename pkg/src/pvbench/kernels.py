"""Backend selection for the hot kernels.

The compiled extension is used when importable; set
``PVBENCH_KERNELS=python`` to force the pure numpy fallback.
"""
import os

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("PVBENCH_KERNELS", "").lower() not in ("python", "py", "fallback"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

knn_query = _impl.knn_query
build_tree = _impl.build_tree
forest_apply = _impl.forest_apply
forest_quantiles = _impl.forest_quantiles
nu_svr_smo = _impl.nu_svr_smo
warm_gradient = _fallback.warm_gradient

__all__ = ["BACKEND", "knn_query", "build_tree", "forest_apply", "forest_quantiles",
           "nu_svr_smo", "warm_gradient"]
