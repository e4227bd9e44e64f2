"""Testbench-first RTL generation with compiler- and simulator-driven repair loops."""

__version__ = "0.1.0"
