"""
Matching-based AMG benchmark
"""
from .bench import run_benchmark

__version__ = "0.1.0"
__all__ = ["run_benchmark"]
