"""podlab: desk-scale laboratory for centralised multimode POD controller
design through a stochastic, rate-limited communication channel."""

__version__ = "0.1.0"
