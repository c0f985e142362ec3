"""Klein tunneling in a Dirac box: continuum solver, SSH lattice and synthetic spectroscopy."""

__version__ = "0.1.0"
