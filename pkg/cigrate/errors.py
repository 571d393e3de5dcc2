from __future__ import annotations

from typing import Optional


class CigrateError(ValueError):
    """Base error. `code` is one of the stable E_* names."""

    def __init__(self, code: str, message: str, *, pair_id: Optional[str] = None):
        self.code = code
        self.message = message
        self.pair_id = pair_id
        text = f"{code}: {message}"
        if pair_id:
            text = f"{text} (pair {pair_id})"
        super().__init__(text)

    def tagged(self, pair_id: str) -> "CigrateError":
        self.pair_id = pair_id
        self.args = (f"{self.code}: {self.message} (pair {pair_id})",)
        return self


class ParseError(CigrateError):
    """Input could not be read as a CI YAML document."""

    def __init__(
        self,
        code: str,
        message: str,
        *,
        line: Optional[int] = None,
        column: Optional[int] = None,
        pair_id: Optional[str] = None,
    ):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(code, message, pair_id=pair_id)


class TransportError(CigrateError):
    """Talking to a completion endpoint failed."""

    def __init__(self, code: str, message: str, *, status: Optional[int] = None):
        self.status = status
        super().__init__(code, message)
