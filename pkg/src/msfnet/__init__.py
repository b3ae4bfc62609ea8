"""Coding-metasurface far-field engine and neural surrogates for its beam measures."""

__version__ = "0.1.0"
