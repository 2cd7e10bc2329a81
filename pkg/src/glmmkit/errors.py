"""Exception types shared across the package."""


class GlmmkitError(Exception):
    """Base class for all errors raised by this package."""


class FormulaError(GlmmkitError):
    """Malformed model formula (lexing, parsing, or term resolution)."""


class DataError(GlmmkitError):
    """CSV or table problem: unreadable file, ragged rows, bad column request."""


class DesignError(GlmmkitError):
    """Design matrices cannot be built from the given terms and data."""


class FamilyError(GlmmkitError):
    """Unknown family or link, or a response incompatible with the family."""


class PriorError(GlmmkitError):
    """Invalid prior specification or an override that matches nothing."""


class FitError(GlmmkitError):
    """Posterior sampling cannot start or finish."""
