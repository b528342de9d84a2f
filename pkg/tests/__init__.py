"""Test package for the ADVI engine."""
