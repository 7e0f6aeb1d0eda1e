"""Guaranteed bounds on linear quantities of interest for 2D linear elasticity."""
