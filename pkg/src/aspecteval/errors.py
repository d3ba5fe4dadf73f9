"""Exception hierarchy shared across the package."""

from __future__ import annotations


class AspectEvalError(Exception):
    """Base class for every error raised by aspecteval."""


# core

class EmptyAspectSet(AspectEvalError, ValueError):
    pass


class InvalidLikert(AspectEvalError, ValueError):
    pass


class DuplicateAspect(AspectEvalError, ValueError):
    pass


class QueryMismatch(AspectEvalError, ValueError):
    pass


class InvalidGold(AspectEvalError, ValueError):
    """Raised when a gold assignment fails validation at load time."""


# metrics

class RankOutOfRange(AspectEvalError, IndexError):
    pass


class ZeroIdeal(AspectEvalError, ValueError):
    pass


class OracleTooLarge(AspectEvalError, ValueError):
    pass


class ZeroGold(AspectEvalError, ValueError):
    pass


class MissingQrels(AspectEvalError, KeyError):
    def __init__(self, query_ids):
        self.query_ids = sorted(query_ids)
        super().__init__(f"runs without qrels: {', '.join(self.query_ids)}")

    def __str__(self) -> str:
        return self.args[0]


# bm25

class DuplicateDocument(AspectEvalError, ValueError):
    pass


class EmptyQuery(AspectEvalError, ValueError):
    pass


class EmptyIndex(AspectEvalError, ValueError):
    pass


class IndexFormatError(AspectEvalError, ValueError):
    pass


# corpus io

class IoError(AspectEvalError, OSError):
    pass


class SchemaError(AspectEvalError, ValueError):
    def __init__(self, message: str, *, path=None, line: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if self.path is not None:
            where = f"{self.path}:{line}: " if line is not None else f"{self.path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class RankOrderError(SchemaError):
    pass


class TraceVersionError(AspectEvalError, ValueError):
    pass


# harness

class ProtocolViolation(AspectEvalError, RuntimeError):
    pass


class RetrievalError(AspectEvalError, RuntimeError):
    def __init__(self, round_number: int, cause: BaseException | str):
        self.round_number = round_number
        super().__init__(f"retriever failed in round {round_number}: {cause}")


class ScriptExhausted(AspectEvalError, RuntimeError):
    pass


class AgentProtocolError(AspectEvalError, RuntimeError):
    pass


class BackendUnavailable(AspectEvalError, RuntimeError):
    pass


# judge

class JudgeParseError(AspectEvalError, ValueError):
    pass


class IncompleteVerdict(JudgeParseError):
    pass


class InvalidScore(JudgeParseError):
    pass


class InvalidRounds(AspectEvalError, ValueError):
    pass


class MissingVerdict(AspectEvalError, KeyError):
    def __init__(self, query_id: str):
        self.query_id = query_id
        super().__init__(f"no verdict for query {query_id!r}")

    def __str__(self) -> str:
        return self.args[0]
