"""Voice-challenge friend verification and profile-cloning attack simulator."""

from ._core import (
    SnknockError,
    Store,
    build_answer_url,
    is_valid_answer_name,
    is_valid_email,
    new_answer_name,
    serialize_questions,
    sha256_hex,
    sim,
    split_questions,
    suggested_questions,
)

__all__ = [
    "SnknockError",
    "Store",
    "build_answer_url",
    "is_valid_answer_name",
    "is_valid_email",
    "new_answer_name",
    "serialize_questions",
    "sha256_hex",
    "sim",
    "split_questions",
    "suggested_questions",
]
