"""Semi-supervised overlapping community detection by clique annealing."""

__version__ = "0.1.0"
