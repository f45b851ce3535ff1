"""Test package for the wave inverse pipeline."""
