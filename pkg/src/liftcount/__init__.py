"""Exact weighted first-order model counting for two-variable logic."""
