"""
Test suite for speckit.
"""
