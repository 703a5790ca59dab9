"""Photon-added two-mode-squeezed-vacuum simulation toolkit.

Fock-space state construction, loss channels, heterodyne/homodyne
measurement simulation with postselection, maximum-likelihood state
reconstruction, entanglement and non-Gaussianity analysis, and secret
key rates for a measure-and-postselect continuous-variable protocol.
"""

__version__ = "0.1.0"
