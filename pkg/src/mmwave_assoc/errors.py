"""Exception types raised by the solver and the experiment harness."""


class InfeasibleLinkError(ValueError):
    """An association routes traffic over a link whose rate is zero."""


class UnservableNodeError(ValueError):
    """A node has no usable path to any access point."""

    def __init__(self, node, reason="all links blocked"):
        self.node = node
        super().__init__(f"{node} is unservable: {reason}")


class EnumerationLimitError(ValueError):
    """Instance is too large for exhaustive enumeration."""


class ConfigError(ValueError):
    """Invalid experiment or scenario configuration."""
