"""Numerical library for compressed push-sum simulation."""
