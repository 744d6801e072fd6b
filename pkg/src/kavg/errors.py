class ContractViolation(ValueError):
    """Raised when an operation is called outside its domain (bad shapes, ranges)."""


class ConfigError(ValueError):
    """An experiment configuration that cannot be built or executed."""


class UndefinedStepsize(ValueError):
    pass


class UnsupportedAsymptotics(ValueError):
    pass
