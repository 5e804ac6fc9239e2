"""Exception hierarchy for the blink pipeline.

Every stage raises a dedicated subclass of BlinkError so the CLI can map
failures onto its documented exit codes without string matching.
"""


class BlinkError(Exception):
    """Base class for all pipeline errors."""


# --- VCD ingestion ---------------------------------------------------------


class MalformedHeader(BlinkError):
    """VCD header is illegal (missing $enddefinitions, duplicate ids, ...)."""


class MalformedBody(BlinkError):
    """VCD value-change section is illegal; carries the byte offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EmptyCandidateSet(BlinkError):
    """Candidate filter matched no signals."""


# --- activity extraction ---------------------------------------------------


class NoTriggerEdge(BlinkError):
    """Trigger signal has no usable rising/falling edge pair."""


class TriggerNotScalar(BlinkError):
    """Trigger signal is not 1 bit wide."""


class ResolutionTooCoarse(BlinkError):
    """Window length leaves zero complete windows in the trigger span."""


# --- power trace -----------------------------------------------------------


class NonUniformSampling(BlinkError):
    """Scope time column is not uniformly spaced within 1 ppm."""


class MissingColumn(BlinkError):
    """Scope export lacks a required column."""


class SupplyBelowDrop(BlinkError):
    """Supply voltage does not exceed the shunt drop (non-physical)."""


class NoTriggerCrossing(BlinkError):
    """Trigger channel never crosses its detection threshold."""


class TraceTooShort(BlinkError):
    """Power trace cannot cover the requested windows; carries the coverable count."""

    def __init__(self, message, coverable=0):
        super().__init__(f"{message} (coverable windows: {coverable})")
        self.coverable = coverable


# --- model identification --------------------------------------------------


class WindowCountMismatch(BlinkError):
    """Activity and power disagree on the number of windows."""

    def __init__(self, n_activity, n_power):
        super().__init__(
            f"activity has {n_activity} windows but power has {n_power}"
        )
        self.n_activity = n_activity
        self.n_power = n_power


class ResolutionMismatch(BlinkError):
    """Activity and power were windowed at different temporal resolutions."""


class TooFewRows(BlinkError):
    """Dataset too small to split."""


class DegenerateDesign(BlinkError):
    """Selected design matrix is rank deficient beyond recovery."""


class FeatureMismatch(BlinkError):
    """Model terms reference features absent from the dataset."""


# --- monitor generation ----------------------------------------------------


class WeightOverflow(BlinkError):
    """A model weight cannot be represented even with zero fractional bits."""


class UnresolvableTap(BlinkError):
    """A tap path is neither a DUT port nor below the DUT top scope."""


# --- synthetic harness -----------------------------------------------------


class ParamOutOfRange(BlinkError):
    """Harness generation parameter outside its documented range."""


# --- pipeline / CLI --------------------------------------------------------


class ConfigError(BlinkError):
    """Pipeline configuration is invalid or inconsistent."""


class MissingInput(BlinkError):
    """A phase input file does not exist."""


class ContainerError(BlinkError):
    """Binary activity/power container is corrupt or has a wrong version."""
