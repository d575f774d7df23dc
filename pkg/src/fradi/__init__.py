"""Variable-coefficient fractional diffusion on regular grids with TLR direct solves."""
__version__ = "0.1.0"
