"""Test package for qproof-sim."""
