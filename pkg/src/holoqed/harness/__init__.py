"""Manifest-driven experiment runner."""
