"""Design and analysis toolkit for a GaAs waveguide beamsplitter fed by
embedded quantum-dot single-photon sources."""

__version__ = "0.1.0"
