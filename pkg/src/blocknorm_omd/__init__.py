"""Online mirror descent with block-norm mirror maps."""
__version__ = "0.1.0"
