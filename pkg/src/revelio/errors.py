"""Exception hierarchy shared across the package."""


class RevelioError(Exception):
    """Base class for every error raised by revelio."""


class InsufficientData(RevelioError):
    pass


class ProfileMismatch(RevelioError):
    pass


class AccessLinkUndetermined(RevelioError):
    pass


class MixedDevices(RevelioError):
    pass


class ConfigInvalid(RevelioError):
    pass


class StunError(RevelioError):
    pass


class StunTimeout(StunError):
    pass


class StunMalformed(StunError):
    pass


class NonPublicMapping(StunError):
    """STUN reported a mapped address that is not globally routable."""

    def __init__(self, address, port):
        super().__init__(f"mapped address {address}:{port} is not public")
        self.address = address
        self.port = port


class SendFailure(RevelioError):
    pass


class AllHopsSilent(RevelioError):
    """Every hop of a traceroute timed out.

    The silent observations are kept on the exception so callers that record
    partial results do not need to probe again.
    """

    def __init__(self, target, observations):
        super().__init__(f"no hop answered toward {target}")
        self.target = target
        self.observations = observations


class SpecParse(RevelioError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class SpecInconsistent(RevelioError):
    pass
