"""Bi-objective risk-averse facility location with subset-based CVaR."""
