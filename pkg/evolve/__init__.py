# ABOUTME: Time-material symmetry toolkit for a single material particle
# ABOUTME: Solves the evolution equation and splits the time axis into remodeling and aging leaves
__version__ = "0.1.0"
