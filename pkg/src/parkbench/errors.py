"""Exception types shared across the workbench."""


class ParkbenchError(Exception):
    """Base class for all workbench errors."""


class GeometryError(ParkbenchError):
    """Invalid or degenerate geometry (bad polygon, bad dimensions)."""


class SceneInfeasibleError(ParkbenchError):
    """No collision-free start pose could be sampled for a scene."""


class LifecycleError(ParkbenchError):
    """Operation called in the wrong episode/session state."""


class SnapshotMismatchError(ParkbenchError):
    """Snapshot restored into an environment built from a different scene."""


class BufferModeError(ParkbenchError):
    """Transition mode does not match the target replay buffer."""


class InvalidRegionError(ParkbenchError):
    """Correction region violates the commit-time validity rules."""


class NotEnoughDataError(ParkbenchError):
    """Replay memory cannot satisfy a sampling request."""


class IllegalEventError(ParkbenchError):
    """Operator event not legal in the current session phase."""


class SchemaError(ParkbenchError):
    """Scenario or config file violates the expected schema.

    ``location`` points at the offending field (e.g. ``obstacles[2].vertices``).
    """

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class StoreError(ParkbenchError):
    """Corrupt or unreadable persistence file."""


class VersionError(StoreError):
    """Persistence file written by an incompatible format version."""
