"""Radon measure-valued entropy solutions and discontinuous viscosity solutions in 1-D."""

__version__ = "0.1.0"
