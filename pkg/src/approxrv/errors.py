"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: configuration and domain
problems exit with 2, numerical failures with 3, and table-file problems
with 4.
"""


class ApproxRvError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ApproxRvError, ValueError):
    """Invalid parameters, flags, or out-of-range configuration."""


class DomainError(ConfigError):
    """Input outside the mathematical domain of an operation."""


class NumericalError(ApproxRvError, ArithmeticError):
    """A numerical procedure failed to converge or lost its bracket."""


class TableIOError(ApproxRvError):
    """Base class for table-file serialization problems."""


class BadMagicError(TableIOError):
    """File does not start with the expected magic bytes."""


class VersionError(TableIOError):
    """File carries an unsupported format version."""


class ChecksumError(TableIOError):
    """Payload checksum does not match the trailing CRC-32."""


class TruncatedFileError(TableIOError):
    """File ended before the declared payload was complete."""
