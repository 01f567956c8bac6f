"""Exception hierarchy shared by every module."""


class RainbenchError(Exception):
    """Base class for all toolkit errors."""


class UnsupportedFormat(RainbenchError, ValueError):
    pass


class CorruptData(RainbenchError, ValueError):
    pass


class InvalidSigma(RainbenchError, ValueError):
    pass


class DimensionMismatch(RainbenchError, ValueError):
    pass


class NotRgb(RainbenchError, ValueError):
    pass


class EmptyAcceptanceSet(RainbenchError, ValueError):
    """No droplet count satisfied the acceptance band."""


class InsufficientPoints(RainbenchError, ValueError):
    pass


class DegenerateX(RainbenchError, ValueError):
    pass


class MixedClassOrImage(RainbenchError, ValueError):
    pass


class NoGroundTruth(RainbenchError, ValueError):
    pass


class BadConfig(RainbenchError, ValueError):
    pass


class MissingDataset(RainbenchError, FileNotFoundError):
    pass


class ZeroBaseline(RainbenchError, ZeroDivisionError):
    pass


class DetectorFailed(RainbenchError, RuntimeError):
    def __init__(self, level, exit_code, detail=""):
        self.level = level
        self.exit_code = exit_code
        msg = f"detector failed at level {level} with exit code {exit_code}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class MissingDetections(RainbenchError, RuntimeError):
    def __init__(self, level, missing):
        self.level = level
        self.missing = list(missing)
        super().__init__(
            f"level {level}: {len(self.missing)} detection file(s) missing: "
            + ", ".join(self.missing)
        )


class OutOfModelDomain(UserWarning):
    """Rainfall below the mapping intercept; clamped to zero droplets."""
