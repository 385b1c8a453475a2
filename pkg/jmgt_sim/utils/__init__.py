"""
Utility decorators for jmgt-sim.
"""

from .decorators import observe

__all__ = ["observe"]
