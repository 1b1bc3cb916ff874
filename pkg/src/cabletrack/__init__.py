"""Payload transport with a variable-length cable: plant, controller, generator, monitors."""

__version__ = "0.1.0"
