"""Shipped experiment presets."""
