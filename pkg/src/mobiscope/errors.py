"""Exception hierarchy for the session fusion pipeline.

Class names double as the stable error codes of the artifact contract,
so the CLI and tests can reference failures by name.
"""


class MobiscopeError(Exception):
    """Base class for every pipeline error."""


class IoError(MobiscopeError):
    """Missing or unreadable file (distinct from builtin IOError/OSError)."""


class EmptyStream(MobiscopeError):
    """Operation requires a non-empty (or longer) sample series."""


class InvalidRange(MobiscopeError):
    """Time range with t0 > t1."""


class ManifestError(MobiscopeError):
    """Schema violation in session.json; carries a JSON pointer."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")


class StreamOrderError(MobiscopeError):
    """Non-monotonic timestamps in a stream file."""

    def __init__(self, path, line: int, message: str = "non-monotonic timestamp"):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class ParseError(MobiscopeError):
    """Malformed row or value in a stream/model file."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class GeodesyError(MobiscopeError):
    """Coordinates outside valid WGS84 bounds."""


class InsufficientAnchors(MobiscopeError):
    """Fewer than the minimum GPS/SLAM anchor pairs for alignment."""


class DegenerateGeometry(MobiscopeError):
    """Anchor geometry too degenerate to constrain the alignment."""


class ImplausibleScale(MobiscopeError):
    """Recovered similarity scale outside plausible bounds (unit error?)."""


class OutOfRange(MobiscopeError):
    """Query timestamp outside the trajectory's time range."""


class EmptyWindow(MobiscopeError):
    """Dispersion requested on an empty sample window."""


class WindowTooLong(MobiscopeError):
    """Filter window longer than the series it is applied to."""


class InsufficientData(MobiscopeError):
    """Not enough samples/intervals to compute a metric."""


class RateError(MobiscopeError):
    """Stream sampling rate below the minimum required by a detector."""


class SkeletonIncomplete(MobiscopeError):
    """Required joints missing or below confidence in a skeleton frame."""


class TooSmall(MobiscopeError):
    """Skeleton pixel height too small for a reliable metric scale."""


class EdgeOrderError(MobiscopeError):
    """Walkway edge columns inverted or zero width."""


class StaleScale(MobiscopeError):
    """Pixel scale too old for the walkway edge frame."""


class DimError(MobiscopeError):
    """Embedding dimension does not match the probe model."""


class InsufficientSegments(MobiscopeError):
    """Fewer than two usable segments for a z-score metric."""


class VersionError(MobiscopeError):
    """Unknown bundle or ground-truth schema version."""


class ScenarioMismatch(MobiscopeError):
    """Bundle and ground truth come from different sessions."""


class BindError(MobiscopeError):
    """Server port already in use."""
