"""LPReach - Fixed-shape differentiable simplex and LP-refined reachability"""

__version__ = "0.1.0"
