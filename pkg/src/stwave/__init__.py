"""Conforming space-time finite elements for the 2D vectorial wave equation."""
