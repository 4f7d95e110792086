class ConfigError(ValueError):
    """Invalid parameter or experiment configuration."""


class ParseError(ValueError):
    """Malformed bytes on the wire."""


class EmptyWindowError(RuntimeError):
    """Raised by the encoder when the coding window holds nothing to encode."""
