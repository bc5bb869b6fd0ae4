"""Exception taxonomy for the laboratory.

Every failure that a caller can reasonably branch on gets its own class.
CLI code maps these to exit code 1 with a machine-readable payload;
anything else is a bug and escapes as a normal traceback.
"""

__all__ = [
    "GkdvError",
    "RangeError",
    "ZeroField",
    "GridMismatch",
    "OmegaOutOfRange",
    "ConvergenceFailure",
    "SingularSystem",
    "BoundaryMismatch",
    "BTooLarge",
    "StepUnstable",
    "WindowOverrun",
    "DecayViolation",
    "OutsideTube",
    "BadHint",
    "J1TooLarge",
    "TooFewStates",
    "NoBlowup",
    "NoCrossing",
    "NoPlateau",
    "ExitDetected",
    "VEvolutionUnstable",
    "FitPoor",
    "FitWindowTooShort",
    "FrameMismatch",
    "WindowTooSmall",
    "SupportOverrun",
    "UnknownKey",
    "ConfigError",
    "ChecksumMismatch",
    "VersionUnsupported",
]


class GkdvError(Exception):
    """Base class; carries an optional payload dict for structured reporting."""

    def __init__(self, message, **payload):
        super().__init__(message)
        self.payload = dict(payload)

    def to_json_dict(self):
        return {
            "error": type(self).__name__,
            "message": str(self),
            "payload": {k: _plain(v) for k, v in sorted(self.payload.items())},
        }


def _plain(v):
    # keep payloads JSON-serializable without importing numpy here
    try:
        import numpy as np

        if isinstance(v, np.generic):
            return v.item()
        if isinstance(v, np.ndarray):
            return v.tolist()
    except Exception:
        pass
    return v


class RangeError(GkdvError):
    """A scalar argument is outside its documented range."""


class ZeroField(RangeError):
    """An operation that needs a nonzero field received the zero field."""


class GridMismatch(GkdvError):
    """Two fields that must share a grid do not."""


class OmegaOutOfRange(GkdvError):
    """Requested saturation parameter outside [0, omega_max] or q outside (5, 9]."""


class ConvergenceFailure(GkdvError):
    """An iterative solve did not reach its tolerance."""


class SingularSystem(GkdvError):
    """A linear profile system could not be solved."""


class BoundaryMismatch(GkdvError):
    """A profile solve produced boundary values inconsistent with its limits."""


class BTooLarge(GkdvError):
    """|b| exceeds the configured localization bound."""


class StepUnstable(GkdvError):
    """The integrator produced non-finite or explosive output."""


class WindowOverrun(GkdvError):
    """Too much mass reached the window edge for the run to stay meaningful."""


class DecayViolation(GkdvError):
    """Initial-data right tail moment exceeds the requested limit."""


class OutsideTube(GkdvError):
    """Field is farther than alpha* from the soliton family."""


class BadHint(GkdvError):
    """Decomposition hint is non-finite or violates basic ranges."""


class J1TooLarge(GkdvError):
    """|J1| >= 1/2, so the Lyapunov power correction is undefined."""


class TooFewStates(GkdvError):
    """A sequence diagnostic needs more consecutive states than supplied."""


class NoBlowup(GkdvError):
    """Tracking ended before lambda contracted by the required factor."""


class NoCrossing(GkdvError):
    """b never dropped to omega/100 within the run."""


class NoPlateau(GkdvError):
    """lambda(t) was still contracting when the run ended."""


class ExitDetected(GkdvError):
    """The field left the soliton tube during a saturated run."""


class VEvolutionUnstable(GkdvError):
    """Evolving the extracted residue past the blow-up time failed."""


class FitPoor(GkdvError):
    """Regression quality below the required threshold."""


class FitWindowTooShort(GkdvError):
    """Not enough samples in the requested fit window."""


class FrameMismatch(GkdvError):
    """Snapshots that must share a lab frame or grid do not."""


class WindowTooSmall(GkdvError):
    """The common grid does not cover the requested |x| < R window."""


class SupportOverrun(GkdvError):
    """Weak-form test function support exceeds the stored space-time region."""


class UnknownKey(GkdvError):
    """Config key not recognized in its section."""


class ConfigError(GkdvError):
    """Aggregate of all config problems; one entry per offending key.

    Each issue is a (kind, key, message) triple with kind in
    {"UnknownKey", "TypeError", "RangeError"}.  All problems in a file are
    collected before raising so a user can fix them in one pass.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        lines = ["%s: %s: %s" % (kind, key, msg) for kind, key, msg in self.issues]
        super().__init__("config invalid:\n  " + "\n  ".join(lines))
        self.payload = {"issues": [list(i) for i in self.issues]}


class ChecksumMismatch(GkdvError):
    """Snapshot payload bytes do not match their recorded checksum."""


class VersionUnsupported(GkdvError):
    """Snapshot file version not readable by this build."""

    def __init__(self, found, supported):
        super().__init__(
            "snapshot version %r unsupported (supported: %s)"
            % (found, ", ".join(str(s) for s in supported)),
            found=found,
            supported=list(supported),
        )
