# errors.py
from __future__ import annotations

from typing import Any, Optional


class ThinlabError(Exception):
    """Base class for every error raised on purpose by thinlab."""


class ParameterDomainError(ThinlabError, ValueError):
    """A parameter lies outside the domain an operation is defined on."""


class ResourceLimitError(ThinlabError):
    """A request exceeds the desk-scale caps (n, support length)."""


class HypothesisViolation(ThinlabError):
    """
    A theorem-level hypothesis (PB, UB, mean match, ...) failed for the input.
    `certificate` is the failing ClassCertificate when one exists.
    """

    def __init__(self, message: str, certificate: Optional[Any] = None):
        super().__init__(message)
        self.certificate = certificate


def require(cond: bool, message: str) -> None:
    if not cond:
        raise ParameterDomainError(message)
