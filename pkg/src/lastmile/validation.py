"""Input validation helpers for the estimator layer."""
from __future__ import annotations

from .corpus import Example, ExampleSet
from .exceptions import ContractError


def check_example_set(X, min_size=1):
    """Accept an ExampleSet or a list of Examples; return the example list."""
    if isinstance(X, ExampleSet):
        examples = X.examples
    elif isinstance(X, (list, tuple)) and all(isinstance(e, Example) for e in X):
        examples = list(X)
    else:
        raise ContractError(
            f"expected ExampleSet or list of Example, got {type(X).__name__}"
        )
    if len(examples) < min_size:
        raise ContractError(f"need at least {min_size} examples, got {len(examples)}")
    return examples


def check_is_fitted(estimator, attribute):
    if getattr(estimator, attribute, None) is None:
        raise ContractError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )


def check_aligned(a, b, what="lists"):
    if len(a) != len(b):
        raise ContractError(f"{what} must have equal length ({len(a)} vs {len(b)})")
