"""Exception taxonomy shared across the toolkit.

Every error raised on a contract violation derives from CtFusionError so
callers (and the CLI) can map failures to categories without string matching.
"""


class CtFusionError(Exception):
    """Base class for all toolkit errors."""


# --- volume / file ingestion ------------------------------------------------

class DicomParseError(CtFusionError):
    """Malformed or unsupported DICOM byte stream."""


class MissingPixelData(DicomParseError):
    """Slice has no pixel data element."""


class InconsistentSliceGeometry(DicomParseError):
    """Slices of one series disagree on rows/columns."""


class UnsupportedTransferSyntax(DicomParseError):
    """Compressed, implicit-VR, or big-endian encodings are not supported."""


class DuplicateSlicePosition(DicomParseError):
    """Two slices share the same ordering key."""


class HeaderParseError(CtFusionError):
    """Sidecar or manifest header is missing, malformed, or inconsistent."""


class PayloadLengthMismatch(CtFusionError):
    """Raw payload byte count does not match the declared dims/element size."""


class ProbabilityOutOfRange(CtFusionError):
    """Probability value outside [0, 1]."""


class MaskValueError(CtFusionError):
    """Mask payload byte outside {0, 1}."""


class SliceOutOfRange(CtFusionError):
    """Requested slice index exceeds the volume depth."""


class IoFailure(CtFusionError):
    """Underlying filesystem write/read failed."""


# --- preprocessing ------------------------------------------------------------

class WrongUnitState(CtFusionError):
    """Operation applied to a volume in the wrong unit state."""


class DegenerateMinimum(CtFusionError):
    """Lung-window divisor |min| is zero."""


class EmptyInput(CtFusionError):
    """Statistics requested over no data."""


class ZeroVariance(CtFusionError):
    """Standard deviation of the input is zero."""


# --- predictions / fusion -----------------------------------------------------

class DimsMismatch(CtFusionError):
    """Volumes that must share dims do not."""


class UnknownFamily(CtFusionError):
    """Model family string not in the supported set."""


class EmptyEnsemble(CtFusionError):
    """Ensemble operation invoked with no member volumes."""


class EmptySample(CtFusionError):
    """Subset search asked to draw zero samples."""


# --- clinical scoring ---------------------------------------------------------

class EmptyLungs(CtFusionError):
    """Combined lung mask has no positive voxels."""


class OverlappingLungs(CtFusionError):
    """Left and right lung masks intersect."""


class DegenerateLabels(CtFusionError):
    """Threshold fitting needs at least two distinct labels and enough spread."""


# --- evaluation ----------------------------------------------------------------

class PanelSizeMismatch(CtFusionError):
    """Panel mask count differs from the configured panel size."""


class EmptyPanel(CtFusionError):
    """Panel aggregate requested over no raters."""


class LengthMismatch(CtFusionError):
    """Paired sequences differ in length or are empty."""


class InsufficientRaters(CtFusionError):
    """Leave-one-out study needs at least two raters."""


# --- synthetic data --------------------------------------------------------------

class SpecInvalid(CtFusionError):
    """Phantom specification violates its geometric invariants."""
