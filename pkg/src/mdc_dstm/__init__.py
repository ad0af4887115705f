"""Single-symbol-decodable differential space-time modulation on MDC-QOSTBC."""

__version__ = "0.1.0"
