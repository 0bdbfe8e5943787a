"""Gauging-based logical Clifford measurement on triangular color codes.

Lattice construction on a square grid with edge ancillas and flag qubits,
layered circuit generation (superdense syndrome rounds, flagged gauging
measurement rounds, growth, pipelining), uniform circuit-level noise,
Pauli-frame Monte-Carlo sampling with full post-selection, a dense
statevector trajectory backend for the non-Clifford variant, and dense-matrix
verification of the deformed-check operator algebra.
"""

from .lattice import ColorCodeLattice, build_triangular_lattice

__all__ = ["ColorCodeLattice", "build_triangular_lattice"]
