"""Linear formulations of viscous Hamilton-Jacobi equations and their quantum-protocol emulation."""

__version__ = "0.1.0"
