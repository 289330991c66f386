"""Exception hierarchy for bondsat.

Every error raised by the library derives from BondsatError, so the CLI can
report structural failures uniformly while still letting callers catch the
narrow cases they care about.
"""


class BondsatError(Exception):
    """Base class for all bondsat errors."""


class ConfigError(BondsatError, ValueError):
    """Invalid configuration value."""


class StructuralError(BondsatError):
    """Malformed e-graph operation: unknown class id, arity or width mismatch."""


# --- bonding ---


class BondError(BondsatError):
    """Base class for bonding and dispersion failures."""


class BondTooSmall(BondError):
    """A bond needs at least two parents."""


class CyclicBond(BondError):
    """Bond candidates are related by ancestry."""


class NotRebuilt(BondError):
    """The e-graph has pending merges; call rebuild() first."""


class IncompleteExtraction(BondError):
    """A bond-map child has no extracted circuit node."""


# --- rules ---


class RuleError(BondsatError):
    """Base class for rule failures."""


class RuleParseError(RuleError):
    def __init__(self, message: str, text: str | None = None):
        self.message = message
        self.text = text
        super().__init__(f"{message}: {text!r}" if text else message)


class StageError(RuleError):
    """A rewrite was used outside its stage."""


# --- circuits ---


class CircuitError(BondsatError):
    """Base class for circuit construction and evaluation failures."""


class NetlistSyntaxError(CircuitError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}")


class CycleError(CircuitError):
    pass


class WidthError(CircuitError):
    pass


class UndefinedNameError(CircuitError):
    pass


class ConstantOverflowError(CircuitError, ValueError):
    pass


class UnboundAdvice(CircuitError):
    pass


class InputError(CircuitError):
    """Missing or out-of-range input value."""


class SignatureError(CircuitError):
    pass


class ExhaustiveTooLarge(CircuitError):
    pass


# --- extraction ---


class ExtractionError(BondsatError):
    pass


class Unextractable(ExtractionError):
    pass


class TooLarge(ExtractionError):
    pass


class DotStageError(BondsatError):
    pass
