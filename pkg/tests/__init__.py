"""
TYolo test suite.
"""
