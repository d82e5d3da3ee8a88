# Shared library for the equation-conditioned emulator toolkit

__version__ = "0.1.0"
