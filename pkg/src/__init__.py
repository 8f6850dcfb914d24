"""
Initialize src package.
"""

__version__ = "1.0.0"
__author__ = "ECG Time/Frequency Study Team"
