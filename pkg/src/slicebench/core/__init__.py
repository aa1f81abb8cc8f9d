"""Core simulation and learning logic."""
