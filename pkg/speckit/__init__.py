"""
speckit: restoration of instrument-broadened spectra by Tikhonov regularization,
with the regularization parameter chosen on training examples.
"""

__version__ = "0.1.0"
