"""Physical constants and unit-bearing literal parsing.

Shared by the config loader and the pulse-sequence grammar, both of which
require explicit units on every nonzero numeric literal.
"""

import math
import re

HBAR = 1.054_571_817e-34            # J s
ATOMIC_MASS = 1.660_539_066e-27     # kg
CA40_MASS = 39.962_590_85 * ATOMIC_MASS
WAVELENGTH_729 = 729e-9             # quadrupole transition wavelength, m
TWO_PI = 2.0 * math.pi

DURATION_UNITS = {"us": 1e-6, "ms": 1e-3, "s": 1.0}
FREQUENCY_UNITS = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6}

_LITERAL = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*([a-zA-Z]*)$")


def split_literal(text: str) -> tuple[float, str]:
    """Split '6.4ms' into (6.4, 'ms'). Raises ValueError on malformed input."""
    m = _LITERAL.match(text.strip())
    if m is None:
        raise ValueError(f"not a numeric literal: {text!r}")
    return float(m.group(1)), m.group(2)


def _convert(text, units, kind):
    value, unit = split_literal(text)
    if unit == "":
        if value == 0.0:
            return 0.0
        raise ValueError(f"missing unit on {kind} literal {text!r} "
                         f"(expected one of {', '.join(units)})")
    if unit not in units:
        raise ValueError(f"unknown {kind} unit {unit!r} in {text!r}")
    return value * units[unit]


def parse_duration(text: str) -> float:
    """Parse a duration literal ('100us', '6.4ms', '0.19s', '0') to seconds."""
    return _convert(text, DURATION_UNITS, "duration")


def parse_frequency(text: str) -> float:
    """Parse a frequency literal ('21kHz', '4.51MHz', '0') to Hz."""
    return _convert(text, FREQUENCY_UNITS, "frequency")


def format_with_unit(value: float, units: dict[str, float]) -> str:
    """Render a value with the largest unit that round-trips exactly.

    Falls back to the base unit with full repr precision, so
    parse(format(x)) == x always holds.
    """
    for unit in sorted(units, key=units.get, reverse=True):
        scale = units[unit]
        scaled = value / scale
        if 0.1 <= abs(scaled) < 1e5 or value == 0.0:
            text = repr(scaled)
            if float(text) * scale == value:
                return f"{text}{unit}"
    base = next(u for u, s in units.items() if s == 1.0)
    return f"{value!r}{base}"
