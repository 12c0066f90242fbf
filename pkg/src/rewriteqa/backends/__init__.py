"""Backend implementations: deterministic in-repo references plus HTTP
adapters speaking the remote wire protocol."""

from .reference import (
    EOS_TOKEN,
    HashEmbedder,
    IdentityRewriter,
    LogLinearRewriter,
    LookupQA,
    LookupRewriter,
    NgramTableScorer,
    vocab_from_questions,
)
from .remote import (
    RemoteEmbedder,
    RemoteEndpoint,
    RemoteQA,
    RemoteRewriter,
    RemoteScorer,
    RemoteTrainableRewriter,
)

__all__ = [
    "EOS_TOKEN",
    "HashEmbedder",
    "IdentityRewriter",
    "LogLinearRewriter",
    "LookupQA",
    "LookupRewriter",
    "NgramTableScorer",
    "vocab_from_questions",
    "RemoteEmbedder",
    "RemoteEndpoint",
    "RemoteQA",
    "RemoteRewriter",
    "RemoteScorer",
    "RemoteTrainableRewriter",
]
