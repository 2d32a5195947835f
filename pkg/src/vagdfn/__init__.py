"""Vertex Approximate Gradient simulation of Darcy flow and tracer transport
in porous media with discrete fracture networks."""

__version__ = "0.1.0"
