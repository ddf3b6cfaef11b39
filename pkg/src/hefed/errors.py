"""Exception hierarchy shared across the package."""


class HefedError(Exception):
    """Base class for all package errors."""


class CryptoError(HefedError):
    pass


class ParamsError(CryptoError):
    pass


class ParamsMismatchError(CryptoError):
    pass


class LevelError(CryptoError):
    pass


class NoiseBudgetExhausted(CryptoError):
    pass


class MissingKeyError(CryptoError):
    pass


class FrameError(CryptoError):
    """Malformed serialized frame."""


class TruncatedFrameError(FrameError):
    pass


class EncodingError(HefedError):
    """Plaintext could not be encoded or decoded."""


class KeystoreError(HefedError):
    pass


class KeyNotFoundError(KeystoreError):
    pass


class AccessDeniedError(KeystoreError):
    pass


class DuplicateKeyError(KeystoreError):
    pass


class StoreError(HefedError):
    pass


class RecordNotFoundError(StoreError):
    def __init__(self, record_id):
        super().__init__(f"record {record_id} not found")
        self.record_id = record_id


class CorruptRowError(StoreError):
    def __init__(self, record_id, reason):
        super().__init__(f"record {record_id}: {reason}")
        self.record_id = record_id
        self.reason = reason


class ProtocolError(HefedError):
    pass


class ConfigError(HefedError):
    pass
