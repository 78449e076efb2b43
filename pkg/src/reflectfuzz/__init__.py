"""Reflective multi-agent smart contract fuzzer."""

__version__ = "0.1.0"
