"""
Regression in the extremes: angular least-squares prediction on heavy-tailed inputs
"""

__version__ = "0.1.0"
