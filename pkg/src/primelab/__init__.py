"""Computational laboratory for comparative prime number theory."""

__version__ = "0.1.0"

from .factor_sieve import Window, FactorWindow, primes_in, prime_blocks, factor_window, kronecker

__all__ = [
    "Window",
    "FactorWindow",
    "primes_in",
    "prime_blocks",
    "factor_window",
    "kronecker",
    "__version__",
]
