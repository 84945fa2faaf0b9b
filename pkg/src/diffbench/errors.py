"""Exception hierarchy shared by all modules.

Each family maps onto a CLI exit code: usage/config problems exit with 2,
malformed or inconsistent data with 3, numerical failures with 4.
"""


class DiffbenchError(Exception):
    exit_code = 1


class UsageError(DiffbenchError, ValueError):
    exit_code = 2


class DataError(DiffbenchError, ValueError):
    exit_code = 3


class NumericError(DiffbenchError, ArithmeticError):
    exit_code = 4


# embedding file format
class FormatError(DataError):
    pass


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class NonFiniteError(DataError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


# manifests and sampling
class ManifestError(DataError):
    pass


class QuotaError(DataError):
    def __init__(self, message, group=None):
        super().__init__(message)
        self.group = group


class PairingError(DataError):
    def __init__(self, message, tile_id=None):
        super().__init__(message)
        self.tile_id = tile_id


class ZeroNormError(DataError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class BoundsError(DataError):
    def __init__(self, message, side=None):
        super().__init__(message)
        self.side = side


class ReplicateError(NumericError):
    def __init__(self, message, replicate=None):
        super().__init__(message)
        self.replicate = replicate
