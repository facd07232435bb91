"""Simulator for multiparty unconditionally secure signatures with leveled
verification, majority-vote dispute resolution and coalition attacks."""

from .errors import USSError, ValidationError
from .estimator import SignatureVerifier
from .params import ProtocolParams, key_budget, validate_params

__version__ = "0.1.0"

__all__ = [
    "ProtocolParams", "SignatureVerifier", "USSError", "ValidationError", "key_budget",
    "validate_params",
]
