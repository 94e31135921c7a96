"""Pose-to-gloss recognition with a decoder-only transformer.

The package is layered bottom-up: ``tensor`` (reverse-mode autodiff on
numpy) and ``optim``, then ``pose_data``/``synth``/``augment`` for data,
``model`` and ``ctc`` for the two architectures, ``metrics`` for WER, and
``training``/``config``/``cli`` on top.
"""
from .errors import AutosignError

__version__ = "0.1.0"

__all__ = ["AutosignError", "__version__"]
