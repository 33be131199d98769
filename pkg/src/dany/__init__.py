"""dany: diversity-controllable partner dancer generation."""

__version__ = "0.1.0"
