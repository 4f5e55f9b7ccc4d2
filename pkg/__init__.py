"""
Approximate Multiplier Toolkit

Bit-exact models, error analysis, logic synthesis and DNN evaluation of
approximate 3x3 and aggregated 8x8 multipliers.
"""

__version__ = "1.0.0"
