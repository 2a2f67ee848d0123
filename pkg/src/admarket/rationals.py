"""Helpers for exact rational values and their JSON representation.

Utilities arrive in instance files as integers, decimal strings, or "p/q"
strings.  All of them are stored as `fractions.Fraction` so the exact stage
never sees a binary float; floats are produced only at the numeric-solver
boundary.
"""

from fractions import Fraction


def parse_rational(value):
    """Parse a JSON scalar into an exact Fraction.

    Accepted: int, "p/q" string, decimal string ("1.25"), or float.  Floats
    are interpreted through their shortest decimal representation, so a JSON
    ``0.1`` becomes exactly 1/10.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a rational value: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError(f"not a finite value: {value!r}")
        return Fraction(repr(value))
    raise ValueError(f"not a rational value: {value!r}")


def format_rational(q):
    """Render a Fraction as an instance-file scalar: int when integral,
    "p/q" string otherwise."""
    q = Fraction(q)
    if q.denominator == 1:
        return int(q)
    return f"{q.numerator}/{q.denominator}"


def format_float(x):
    """Format a float with 17 significant digits (lossless round-trip)."""
    return float(format(float(x), ".17g"))


def isqrt_ceil(k):
    """Smallest integer s with s*s >= k, for k >= 0."""
    if k < 0:
        raise ValueError("negative argument")
    import math

    s = math.isqrt(k)
    return s if s * s == k else s + 1
