"""Quasi-stationary measures, invariant partitions and invariance entropy on grids."""
