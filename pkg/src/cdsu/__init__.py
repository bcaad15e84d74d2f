"""Concurrent disjoint set union."""
