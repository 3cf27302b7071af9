"""Resampling-based uncertainty quantification, split conformal prediction and
subgroup stability / fairness audits for tabular models."""

__version__ = "0.1.0"

from .errors import ConfigError, ParseError, SchemaError, UQAuditError, ValidationError  # noqa: E402

__all__ = ["ConfigError", "ParseError", "SchemaError", "UQAuditError", "ValidationError", "__version__"]
