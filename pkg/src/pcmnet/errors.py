"""Exception types shared across the package."""


class PcmnetError(Exception):
    """Base class for package-specific failures."""


class ConfigError(PcmnetError):
    """Invalid or inconsistent configuration."""


class MissingFile(PcmnetError):
    """A manifest-referenced file does not exist."""


class ShapeMismatch(PcmnetError):
    """Stored or passed array rank/dims disagree with the declared shape."""


class LengthMismatch(PcmnetError):
    """Two paired sequences have different lengths."""


class DegenerateAttention(PcmnetError):
    """A valid query row faces zero valid keys; upstream data is broken."""


class DegenerateBatch(PcmnetError):
    """No anchor in the batch has a positive partner."""


class NonFiniteLoss(PcmnetError):
    """Training produced a NaN or infinite loss."""
