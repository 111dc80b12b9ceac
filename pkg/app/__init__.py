"""
neuroevo-lab: neuroevolution vs gradient descent, measured.
"""

__version__ = "0.1.0"
