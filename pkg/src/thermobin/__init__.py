"""Optimal coarse-grained thermometry."""
