"""Higher-order average Hamiltonian engineering for collectively driven qubit networks."""

__version__ = "0.1.0"
