"""Behavioral simulator of memristive-crossbar massive MIMO linear detectors.

The package models the amplifier-enhanced ZF/MMSE detector circuit, in which
the small-scale fading matrix is programmed into crossbars and the large-scale
fading gains are applied by a bank of op-amp amplifiers, side by side with the
conventional crossbar detector that programs the full channel matrix.
"""

__version__ = "0.1.0"
