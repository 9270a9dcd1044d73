"""Pinning of a renewal on a quenched renewal: laws, partition functions,
annealed solution and disorder-relevance certificates."""
__version__ = "0.1.0"
