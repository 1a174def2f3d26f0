"""
fracsource - source identification for a time-fractional subdiffusion equation
"""
__version__ = "0.1.0"
