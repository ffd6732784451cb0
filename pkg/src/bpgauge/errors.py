"""Exception types raised across the package."""


class BPGaugeError(Exception):
    """Base class for all errors raised by bpgauge."""


class DimensionMismatch(BPGaugeError, ValueError):
    pass


class NumericalError(BPGaugeError, ArithmeticError):
    pass


class NotHermitian(BPGaugeError, ValueError):
    pass


class NotPositive(BPGaugeError, ValueError):
    pass


class DegenerateInput(BPGaugeError, ValueError):
    pass


class DegenerateMessage(BPGaugeError, ArithmeticError):
    """A message update produced a zero-trace matrix (null state slice)."""


class DegenerateState(BPGaugeError, ArithmeticError):
    pass


class TooLarge(BPGaugeError, MemoryError):
    """Exact contraction would exceed the configured size limit."""


class InvalidSpec(BPGaugeError, ValueError):
    pass


class ConfigError(BPGaugeError, ValueError):
    pass
