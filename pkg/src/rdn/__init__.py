"""Recurrent multi-frame deblurring: numeric core, network, data forge, training, inference."""

__version__ = "0.1.0"
