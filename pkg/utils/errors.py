"""Exception types shared by every stage of the toolkit"""


class ApproxMulError(Exception):
    """Base class for all toolkit errors"""


class DomainError(ApproxMulError, ValueError):
    """An argument lies outside the domain an operation accepts"""


class WidthCapError(DomainError):
    """An exhaustive operation was asked to enumerate more than its cap allows"""


class DataFormatError(ApproxMulError):
    """A file or text blob does not follow the expected format"""

    def __init__(self, message: str, path: str = None, offset: int = None):
        self.path = path
        self.offset = offset
        details = []
        if path:
            details.append(f"file {path}")
        if offset is not None:
            details.append(f"offset {offset}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class AccumulatorOverflowError(ApproxMulError):
    """A LUT accumulator left the signed 32-bit range"""


class ConsistencyError(ApproxMulError):
    """A report failed its internal consistency check"""


class DivergenceError(ApproxMulError):
    """Training produced a non-finite loss"""

    def __init__(self, message: str, diagnostics: dict = None):
        self.diagnostics = diagnostics or {}
        if self.diagnostics:
            message = f"{message}: " + ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        super().__init__(message)
