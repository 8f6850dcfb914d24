"""
Test package for the ECG study.
"""

import sys
from pathlib import Path

# Project root, so test modules can import src.* and shared writers from tests.*
sys.path.insert(0, str(Path(__file__).parent.parent))
