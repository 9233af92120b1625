"""Exception hierarchy shared by every module.

Each error carries a module-qualified ``code`` (``"detect.SeriesTooShort"``)
so the CLI can report failures uniformly. Errors caused by bad input derive
from :class:`InputError` and map to exit status 2.
"""

from __future__ import annotations


class HybridTelError(Exception):
    module = "core"

    @property
    def code(self) -> str:
        return f"{self.module}.{type(self).__name__}"


class InputError(HybridTelError, ValueError):
    """Invalid input data or arguments (CLI exit status 2)."""


class DegenerateWarning(UserWarning):
    """A statistic collapsed (zero MAD, zero variance, 0/0 metric)."""


# telemetry
class TelemetryError(InputError):
    module = "telemetry"


class MalformedHeader(TelemetryError):
    pass


class MalformedRow(TelemetryError):
    def __init__(self, line_no: int, reason: str = ""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}" if reason else f"line {line_no}")


class NonMonotonicTime(TelemetryError):
    def __init__(self, line_no: int):
        self.line_no = line_no
        super().__init__(f"line {line_no}: t_ms does not increase")


class EmptySeries(InputError):
    module = "core"


class MalformedMeta(TelemetryError):
    pass


# sigproc
class SigprocError(InputError):
    module = "sigproc"


class WindowTooLarge(SigprocError):
    pass


class LengthMismatch(InputError):
    module = "core"


class ZeroVariance(SigprocError):
    pass


# detect
class DetectError(InputError):
    module = "detect"


class SeriesTooShort(InputError):
    module = "core"


class SeriesTooLong(DetectError):
    pass


# learn
class LearnError(InputError):
    module = "learn"


class DynamicScenarioRejected(LearnError):
    pass


class SingleClassData(LearnError):
    pass


class EmptyData(LearnError):
    pass


class FoldTooSmall(LearnError):
    pass


class UntrainedModel(LearnError):
    pass


# tcn
class TcnError(HybridTelError):
    module = "tcn"


class ConstantSeries(InputError):
    module = "tcn"


class ShapeMismatch(InputError):
    module = "tcn"


class NotEnoughData(InputError):
    module = "tcn"


class DivergedLoss(TcnError):
    pass


# synth
class SynthError(HybridTelError):
    module = "synth"


class DepletedBattery(SynthError):
    pass


class EmptyCartridges(SynthError):
    pass


class ZeroPower(InputError):
    module = "synth"
