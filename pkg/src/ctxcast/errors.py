"""Exception hierarchy shared across the harness."""

from __future__ import annotations


class CtxcastError(Exception):
    """Base class for every error raised by ctxcast."""


# --- task loading -----------------------------------------------------------


class TaskError(CtxcastError):
    pass


class MalformedLine(TaskError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class InvariantViolation(TaskError):
    def __init__(self, task_id: str, which: list[str]):
        super().__init__(f"task {task_id!r}: {'; '.join(which)}")
        self.task_id = task_id
        self.which = which


class DuplicateId(TaskError):
    def __init__(self, task_id: str):
        super().__init__(f"duplicate task id {task_id!r}")
        self.task_id = task_id


# --- metrics ----------------------------------------------------------------


class MetricError(CtxcastError, ValueError):
    pass


class EmptySamples(MetricError):
    pass


class NonFiniteInput(MetricError):
    pass


class EmptyInput(MetricError):
    pass


class EmptyGroup(MetricError):
    def __init__(self, group: str):
        super().__init__(f"no admissible records for group {group!r}")
        self.group = group


# --- parsing ----------------------------------------------------------------


class ParseError(CtxcastError, ValueError):
    """Model output did not follow the requested format."""


class MissingTag(ParseError):
    pass


class MissingOpenTag(MissingTag):
    pass


class MissingCloseTag(MissingTag):
    pass


class TimestampMismatch(ParseError):
    def __init__(self, missing=(), unexpected=()):
        self.missing = list(missing)
        self.unexpected = list(unexpected)
        super().__init__(
            f"timestamp mismatch: missing={self.missing[:5]} unexpected={self.unexpected[:5]}"
        )


class DuplicateTimestamp(ParseError):
    pass


class UnparsableLine(ParseError):
    def __init__(self, line_no: int, line: str):
        super().__init__(f"line {line_no}: cannot parse {line!r}")
        self.line_no = line_no


class NonFiniteValue(ParseError):
    pass


class MissingAnswerTag(ParseError):
    pass


class UnrecognizedVerdict(ParseError):
    pass


# --- prompts ----------------------------------------------------------------


class PromptError(CtxcastError, ValueError):
    pass


class MissingSlot(PromptError):
    def __init__(self, kind, slot: str):
        super().__init__(f"{kind} requires slot {slot!r}")
        self.kind = kind
        self.slot = slot


class ExtraSlot(PromptError):
    def __init__(self, kind, slot: str):
        super().__init__(f"{kind} does not accept slot {slot!r}")
        self.kind = kind
        self.slot = slot


# --- llm client -------------------------------------------------------------


class ClientError(CtxcastError):
    pass


class TransportError(ClientError):
    def __init__(self, status: int | None, reason: str):
        super().__init__(f"transport failure (status={status}): {reason}")
        self.status = status
        self.reason = reason


class AuthMissing(ClientError):
    pass


class LLMTimeout(ClientError):
    pass


class RetriesExhausted(ClientError):
    def __init__(self, sample_index: int, attempts: int, last_error: Exception | None,
                 task_id: str | None = None):
        where = f" (task {task_id})" if task_id else ""
        super().__init__(
            f"sample {sample_index}{where}: no valid output after {attempts} attempts; "
            f"last error: {last_error}"
        )
        self.sample_index = sample_index
        self.attempts = attempts
        self.last_error = last_error
        self.task_id = task_id


class NoSignal(ClientError):
    pass


# --- base forecasters -------------------------------------------------------


class HistoryTooShort(CtxcastError, ValueError):
    pass


# --- routing ----------------------------------------------------------------


class InvalidPermutation(CtxcastError, ValueError):
    pass


class DegenerateGap(CtxcastError, ValueError):
    pass


class TaskSetMismatch(CtxcastError, ValueError):
    pass


# --- strategies / mock ------------------------------------------------------


class ExampleMissingFuture(CtxcastError, ValueError):
    pass


class NoRuleMatched(CtxcastError):
    pass


class AmbiguousHistory(CtxcastError, ValueError):
    pass
