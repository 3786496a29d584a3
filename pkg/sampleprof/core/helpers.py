"""
Helpers functions for sampleprof.
"""

import logging
import os
import tempfile
from collections.abc import Iterable

U64_MAX = (1 << 64) - 1

_LOGGER = logging.getLogger(__name__)


###############################
#       Counts arithmetic     #
###############################
def saturating_add(a: int, b: int) -> tuple[int, bool]:
    """Return (a + b clamped to u64, whether it clamped)."""
    total = a + b
    if total > U64_MAX:
        return U64_MAX, True
    return total, False


def saturating_sum(values: Iterable[int]) -> tuple[int, bool]:
    """Sum u64 counters, clamping at the maximum."""
    total = 0
    clamped = False
    for value in values:
        total, hit = saturating_add(total, value)
        clamped = clamped or hit
    return total, clamped


def round_half_up(numerator: int, denominator: int) -> int:
    """Integer division rounding halves up: round_half_up(5, 2) == 3."""
    if denominator <= 0:
        raise ValueError(f"denominator must be positive, got {denominator}")
    return (2 * numerator + denominator) // (2 * denominator)


###############################
#         Output files        #
###############################
def atomic_write(fname: str, content: str) -> None:
    """Write content to fname through a temporary file renamed on success.

    Nothing is left behind when writing fails.
    """
    directory = os.path.dirname(os.path.abspath(fname))
    fd, tmp_name = tempfile.mkstemp(
        prefix=".sampleprof-", suffix=".tmp", dir=directory
    )
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as tmp_file:
            tmp_file.write(content)
        os.replace(tmp_name, fname)
    except BaseException:
        _LOGGER.debug("Discarding partial output %s", tmp_name)
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def read_text(fname: str) -> str:
    """Read a sidecar file as UTF-8 text."""
    with open(fname, encoding="utf-8") as in_file:
        return in_file.read()
