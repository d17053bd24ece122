"""
tdfit - multiband time-delay estimation.

Estimates multipath delays from multiband OFDM channel estimates by weighted
subspace fitting over multiple shift-invariance structures, and benchmarks the
estimator against ESPRIT, MI-MUSIC, a multiresolution initializer and the CRLB.
"""

__version__ = "0.1.0"
