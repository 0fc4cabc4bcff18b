"""Exception hierarchy shared by every module."""

from __future__ import annotations


class TaskWorldError(Exception):
    """Base class. ``stage`` is filled in when an error crosses a pipeline stage."""

    stage: str | None = None


# scene
class ParseError(TaskWorldError):
    pass


class ValidationError(TaskWorldError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class UnknownCategory(TaskWorldError):
    pass


# world
class UnknownObject(TaskWorldError):
    pass


class InvalidParam(TaskWorldError):
    pass


class MissingContext(TaskWorldError):
    pass


# graph
class SliceViolation(TaskWorldError):
    pass


# taskgen
class PlannerUnavailable(TaskWorldError):
    pass


class UnresolvedObject(TaskWorldError):
    pass


class InvalidDecomposition(TaskWorldError):
    pass


class NoTemplate(TaskWorldError):
    pass


class BddlParseError(TaskWorldError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


# evolve / codec
class UnknownActionId(TaskWorldError):
    pass


class ParamShapeMismatch(TaskWorldError):
    pass


class EmptySequence(TaskWorldError):
    pass


class CriticUnavailable(TaskWorldError):
    pass


class MisalignedObservations(TaskWorldError):
    pass


class RepeatedProposal(TaskWorldError):
    pass


class InitUnsatisfied(TaskWorldError):
    pass


# observe
class StepOutOfRange(TaskWorldError):
    pass


# metrics
class EmptyBatch(TaskWorldError):
    pass


class IoError(TaskWorldError):
    pass
