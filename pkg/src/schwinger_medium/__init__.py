"""Heavy charges in the lattice Schwinger model: real-time simulation,
adaptive variational state preparation, and circuit resource accounting."""

__version__ = "0.1.0"
