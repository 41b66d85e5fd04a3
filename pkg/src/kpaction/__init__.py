"""Keypoint-sequence action recognition engine.

Trains and evaluates a from-scratch LSTM classifier (and an MLP baseline) on
fixed-length keypoint windows, generates reproducible synthetic benchmark
datasets, and runs sliding-window streaming inference over frame streams.
"""

__version__ = "0.1.0"
