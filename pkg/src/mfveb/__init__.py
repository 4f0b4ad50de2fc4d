"""Multi-fidelity recurrent surrogates with disentangled uncertainty."""

__version__ = "0.1.0"
