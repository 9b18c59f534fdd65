"""Exception types shared across the engine, service, and CLI.

Every error that can cross the service boundary carries a stable ``code``
string so HTTP handlers and the CLI map failures without matching on
message text.
"""


class MarketError(Exception):
    """Base class for engine errors."""

    code = "engine_error"


class BadSpecError(MarketError):
    """Invalid market description, security text, or request parameters."""

    code = "bad_spec"


class SecurityParseError(BadSpecError):
    """Security text failed to parse; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class NullEventError(MarketError):
    """Conditioning on an event with probability zero."""

    code = "null_event"


class DegeneratePriceError(MarketError):
    """Trade requested on a security priced at exactly 0 or 1."""

    code = "degenerate_price"


class NotStructurePreservingError(MarketError):
    """Exact update requested for a security that would change the network
    structure."""

    code = "not_structure_preserving"


class CompatCheckTooLargeError(MarketError):
    """Compatibility check rejected because the formula touches too many
    variables for exhaustive verification."""

    code = "compat_check_too_large"


class StaleQuoteError(MarketError):
    """Trade pinned to a quote revision that is no longer current."""

    code = "stale_quote"
