"""Vertex-reinforced jump processes on Galton-Watson trees: samplers, mu(c) and the branching chain."""

__version__ = "0.1.0"
