"""Exception hierarchy.

``DataError`` subclasses signal bad inputs (the CLI maps them to exit
code 2); everything else derived from ``CCDError`` is a runtime failure.
"""

from __future__ import annotations


class CCDError(Exception):
    pass


class DataError(CCDError):
    pass


# corpus ingest
class MissingFile(DataError):
    def __init__(self, path):
        super().__init__(f"missing source file: {path}")
        self.path = path


class MalformedMetadata(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class UnknownLanguage(DataError):
    pass


# dataset building
class InsufficientPairs(DataError):
    pass


class InsufficientProblems(DataError):
    pass


class InsufficientSubmissions(DataError):
    pass


class LanguageOverlap(DataError):
    pass


class MalformedDataset(DataError):
    pass


class ParseError(DataError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line


class OverlapError(DataError):
    pass


# episodes / contrastive sampling
class NotEnoughClasses(DataError):
    pass


class NotEnoughSamples(DataError):
    pass


class DegenerateEpisode(DataError):
    pass


class InsufficientData(DataError):
    pass


class InsufficientCandidates(DataError):
    pass


# numerics
class EmptySequence(CCDError):
    pass


class ZeroVector(CCDError):
    pass


class NonPositiveTemperature(CCDError):
    pass


class NoNegatives(CCDError):
    pass


class LengthMismatch(CCDError):
    pass


class EmptyInput(CCDError):
    pass
