"""Hot-kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``INVLAB_PURE_PYTHON=1`` to force the numpy fallback.
"""
import logging
import os

log = logging.getLogger(__name__)

if os.environ.get("INVLAB_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as impl
    BACKEND = "python"
else:
    try:
        from . import _kernels as impl
        BACKEND = "compiled"
    except ImportError:  # extension not built
        from . import _kernels_py as impl
        BACKEND = "python"
        log.debug("compiled kernels unavailable, using numpy fallback")

mix64 = impl.mix64
uniforms = impl.uniforms
inverse_cdf = impl.inverse_cdf
stage_expectation = impl.stage_expectation
simulate = impl.simulate

__all__ = ["BACKEND", "mix64", "uniforms", "inverse_cdf", "stage_expectation", "simulate"]
