"""Exact-arithmetic laboratory for shrinking sets, weak* distances and perturbations of maps on [0,1]^m."""

__version__ = "0.1.0"
