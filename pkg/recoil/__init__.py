"""Photon-recoil fidelity model for heralded two-photon remote entanglement."""

__version__ = "0.1.0"
