"""Desk-scale slide-level vision-language modeling on synthetic corpora."""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]
