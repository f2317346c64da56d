"""Desk-scale musculoskeletal simulation and hierarchical muscle control."""

__version__ = "0.1.0"
