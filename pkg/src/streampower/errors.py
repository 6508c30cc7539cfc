"""Exception hierarchy shared by every stage of the pipeline."""


class StreamPowerError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for this error."""

    exit_code = 1


class InvalidSession(StreamPowerError, ValueError):
    exit_code = 10

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class MissingProfile(StreamPowerError, KeyError):
    exit_code = 11

    def __init__(self, device, codec):
        self.device = device
        self.codec = codec
        super().__init__(f"no power profile for (device={device}, codec={codec})")

    def __str__(self):
        return self.args[0]


class NonPositivePower(StreamPowerError, ValueError):
    exit_code = 12

    def __init__(self, session_id, watts):
        self.session_id = session_id
        self.watts = watts
        super().__init__(
            f"session {session_id!r}: predicted power {watts!r} W is not positive "
            "(miscalibrated profile?)"
        )


class InvalidProfile(StreamPowerError, ValueError):
    exit_code = 13


class UnknownCodec(StreamPowerError, KeyError):
    exit_code = 14

    def __init__(self, codec):
        self.codec = codec
        super().__init__(f"codec {codec!r} has no registered QoE efficiency")

    def __str__(self):
        return self.args[0]


class InvalidConfig(StreamPowerError, ValueError):
    exit_code = 15


class MosOutOfRange(StreamPowerError, ValueError):
    exit_code = 16


class EmptyInput(StreamPowerError, ValueError):
    exit_code = 17


class NoFeasiblePoint(StreamPowerError, LookupError):
    exit_code = 18


class EmptyGroup(StreamPowerError, ValueError):
    exit_code = 19


class IdentityViolation(StreamPowerError, ArithmeticError):
    exit_code = 20


class InvalidSpec(StreamPowerError, ValueError):
    exit_code = 21


class UnreadableFile(StreamPowerError, OSError):
    exit_code = 22


class EmptyDataset(StreamPowerError, ValueError):
    exit_code = 23


class MalformedHeader(StreamPowerError, ValueError):
    exit_code = 24


class UnwritablePath(StreamPowerError, OSError):
    exit_code = 25


class ReportError(StreamPowerError, ValueError):
    """Raised when a document cannot be serialized faithfully (e.g. NaN)."""

    exit_code = 26
