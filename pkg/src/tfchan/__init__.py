"""How far doubly-dispersive channel operators are from diagonal on shifted pulses."""

__version__ = "0.1.0"
