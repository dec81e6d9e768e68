"""Exception hierarchy shared by every module of the package."""


class OfflineFinderError(Exception):
    """Base class for all errors raised by offline_finder."""


class InvalidArgument(OfflineFinderError, ValueError):
    pass


class InvalidKey(OfflineFinderError, ValueError):
    pass


class DecryptFailure(OfflineFinderError):
    """Authenticated decryption failed.

    The message is deliberately constant: callers must not be able to tell a
    wrong key from a corrupted ciphertext.
    """

    def __init__(self, message: str = "decryption failed"):
        super().__init__(message)


class InvalidTime(OfflineFinderError, ValueError):
    pass


class InvalidNonce(OfflineFinderError, ValueError):
    pass


class PrecisionError(OfflineFinderError, ArithmeticError):
    pass


class ConfigError(OfflineFinderError, ValueError):
    pass
