"""Exception types shared across the pipeline stages."""

from __future__ import annotations


class RouteAuditError(Exception):
    """Base class for every error raised by this package."""


# ingest
class MalformedFile(RouteAuditError):
    pass


class EmptyExtent(RouteAuditError):
    pass


class NoRoads(RouteAuditError):
    pass


# sampling
class TooFewPoints(RouteAuditError):
    pass


class Infeasible(RouteAuditError):
    pass


# distance
class DuplicateNodes(RouteAuditError):
    def __init__(self, i: int, j: int, meters: float):
        super().__init__(f"nodes {i} and {j} are {meters:.3f} m apart (< 0.1 m)")
        self.i, self.j, self.meters = i, j, meters


# solver
class BadIndex(RouteAuditError):
    pass


class TooLarge(RouteAuditError):
    pass


# routing
class Unreachable(RouteAuditError):
    pass


# rendering
class ResolutionOutOfRange(RouteAuditError):
    pass


# oracle
class DegenerateGeometry(RouteAuditError):
    pass


class MalformedAnnotation(RouteAuditError):
    pass


# llm client
class EndpointError(RouteAuditError):
    """Any failure talking to a model endpoint."""


class EndpointUnreachable(EndpointError):
    pass


class HttpError(EndpointError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class Timeout(EndpointError):
    pass


# extraction
class ParseFailure(RouteAuditError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class ExtractionFailed(RouteAuditError):
    pass


# evaluation
class MissingLabel(RouteAuditError):
    def __init__(self, leg_id: str):
        super().__init__(f"no label for leg {leg_id!r}")
        self.leg_id = leg_id


# pipeline
class ConfigError(RouteAuditError):
    pass


class StageFailure(RouteAuditError):
    def __init__(self, stage: str, artifact: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed ({artifact}): {cause}")
        self.stage = stage
        self.artifact = artifact
        self.cause = cause
