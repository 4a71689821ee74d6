import math


def estimate_tokens(text: str) -> int:
    """Crude, endpoint-agnostic token count: one token per four characters."""
    return math.ceil(len(text) / 4)
