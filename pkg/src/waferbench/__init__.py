"""Wafer trace classification bench: dense/LSTM/HTM models, analog crossbar
inference with device nonidealities, and a parametric hardware cost model."""

__version__ = "0.1.0"
