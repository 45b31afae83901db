"""Exception hierarchy shared by every stage of the calibration package."""


class LhcalibError(Exception):
    """Base class for all package errors."""


class ValidationError(LhcalibError, ValueError):
    """Input failed a structural or range check."""


class RangeError(ValidationError):
    """A scalar input fell outside its admissible interval."""


class EmptyCaptureError(LhcalibError):
    """A pulse stream contained no usable synchronisation pulses."""


class InsufficientDataError(LhcalibError):
    """Too few records or frames to run the requested operation."""


class BehindStationError(LhcalibError):
    """A diode lies on or behind a laser plane of a station."""

    def __init__(self, diode: int, message: str | None = None):
        self.diode = diode
        super().__init__(message or f"diode {diode} is behind the station")


class UnderdeterminedError(InsufficientDataError):
    """Fewer than four diodes are available for a pose fit."""


class DegenerateConfigurationError(LhcalibError):
    """Point sets are collinear or otherwise rank deficient."""


class PathQualityError(LhcalibError):
    """Too many frames of a measurement path failed to converge."""


class AlignmentError(LhcalibError):
    """Two measurement paths share no time overlap."""


class CoverageError(LhcalibError):
    """A simulated trajectory leaves the stations' field of view too often."""


class StageError(LhcalibError):
    """Wraps a failure inside one named pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
