"""Exception hierarchy shared by all modules."""


class GeometryError(Exception):
    """Base class for every error raised by this package."""


class OutOfChart(GeometryError):
    pass


class DegenerateMetric(GeometryError):
    pass


class UnknownExample(GeometryError):
    pass


class BadParams(GeometryError):
    pass


class NonMorsePoint(GeometryError):
    """The squared-distance function at the query point is not Morse."""


class UnresolvedEvent(GeometryError):
    pass


class RegularityRequired(GeometryError):
    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class WitnessNotFound(GeometryError):
    def __init__(self, message, maxima=None):
        super().__init__(message)
        self.maxima = maxima or {}


class RadiusTooLarge(GeometryError):
    pass


class FrameFailure(GeometryError):
    pass


class PairingFailure(GeometryError):
    pass
