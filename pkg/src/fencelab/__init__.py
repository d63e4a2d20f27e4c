"""fencelab: finite combinatorics of Hasse forests and fence approximation."""

__version__ = "0.1.0"
