"""Nonlocal degenerate parabolic equation with variable-exponent absorption."""
