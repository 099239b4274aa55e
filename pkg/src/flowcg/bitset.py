"""Points-to sets as Python ints: bit ``i`` set means node ``i`` is a member."""

from __future__ import annotations

from typing import Iterable, Iterator


def from_ids(ids: Iterable[int]) -> int:
    mask = 0
    for i in ids:
        mask |= 1 << i
    return mask


def iter_bits(mask: int) -> Iterator[int]:
    """Yield the set bit positions of ``mask`` in increasing order."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def count(mask: int) -> int:
    return mask.bit_count()


def sole(mask: int) -> int | None:
    """Return the only member of a singleton set, else None."""
    if mask and not mask & (mask - 1):
        return mask.bit_length() - 1
    return None
