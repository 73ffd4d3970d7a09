"""Simulator and analysis toolkit for three-party semiquantum secret sharing
with chi-type states."""

__version__ = "0.1.0"
