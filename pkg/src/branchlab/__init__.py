"""branchlab: numerics for two-valued harmonic and energy-minimizing functions."""

__version__ = "0.1.0"
