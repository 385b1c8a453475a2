"""
Tests for jmgt-sim.
"""
