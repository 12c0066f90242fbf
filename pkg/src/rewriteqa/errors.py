"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class RewriteQAError(Exception):
    """Base class for all pipeline errors."""


class DatasetParseError(RewriteQAError):
    """A dataset line is not valid JSON."""

    def __init__(self, path: str, line_number: int, reason: str):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {reason}")


class DatasetSchemaError(RewriteQAError):
    """A dataset record is valid JSON but violates the record schema."""

    def __init__(self, path: str, line_number: int, reason: str):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {reason}")


class InvalidInputError(RewriteQAError):
    """An operation received input outside its documented preconditions."""


class BackendError(RewriteQAError):
    """A model backend (reference or remote) failed."""


class VocabularyError(BackendError):
    """A token fell outside a closed-vocabulary model."""

    def __init__(self, token: str):
        self.token = token
        super().__init__(f"token not in model vocabulary: {token!r}")


class ScoringError(BackendError):
    """The language-model scorer failed on a specific candidate."""

    def __init__(self, candidate_text: str, reason: str):
        self.candidate_text = candidate_text
        super().__init__(f"scoring failed for candidate {candidate_text!r}: {reason}")


class RemoteProtocolError(BackendError):
    """A remote backend returned a response that violates the wire schema."""


class BackendUnavailableError(BackendError):
    """A remote backend could not be reached after the configured retries."""


class NoCandidatesError(RewriteQAError):
    """Every exploration lot for a question came back empty."""


class MissingGoldError(RewriteQAError):
    """A prediction references a question id with no gold answers."""

    def __init__(self, question_id: str):
        self.question_id = question_id
        super().__init__(f"no gold answers for question {question_id!r}")


class ConfigError(RewriteQAError):
    """The pipeline configuration is invalid or incomplete."""


class ConfigMismatchError(ConfigError):
    """A checkpoint was produced under a different configuration."""


class TrainStepError(RewriteQAError):
    """A training step aborted on a backend failure for one question."""

    def __init__(self, question_id: str, reason: str):
        self.question_id = question_id
        super().__init__(f"step aborted on question {question_id!r}: {reason}")
