"""Exception types shared across the lab."""


class NumericsError(RuntimeError):
    """A solver produced NaN/Inf or otherwise left its validity envelope."""


class ConfigError(ValueError):
    """An experiment configuration failed schema or cross-reference checks."""


class BudgetError(ValueError):
    """A dense-kernel or tensor memory guard was exceeded."""
