"""Exception types shared across the package."""


class ContractError(ValueError):
    """An argument violates an operation's precondition."""


class CFLError(ContractError):
    """Time step exceeds the stability/accuracy cap of a scheme."""


class WindowError(ContractError):
    """Requested time lies outside a provider's or base flow's validity window."""


class GridMismatchError(ContractError):
    """Fields or files that must share one grid do not."""
