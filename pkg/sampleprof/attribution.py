"""Cycles-mode attribution: sampled addresses to instructions and source keys."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .core.formats import BinaryDescription, InlineStack, SampleMode, SampleSet
from .core.helpers import U64_MAX, round_half_up, saturating_add, saturating_sum

_LOGGER = logging.getLogger(__name__)


class ModeError(ValueError):
    """A session of the wrong mode was handed to a mode specific stage."""


def require_mode(samples: SampleSet, mode: SampleMode, operation: str) -> None:
    if samples.mode != mode:
        raise ModeError(f"{operation} needs a {mode} session, got {samples.mode}")


def resolve(address: int, binary: BinaryDescription) -> InlineStack | None:
    """Return the inline stack of the instruction at exactly address."""
    if (insn := binary.instruction_at(address)) is None:
        return None
    return insn.source_key


@dataclass
class AddressProfile:
    """Per-address counts built against one BinaryDescription."""

    counts: dict[int, int] = field(default_factory=dict)
    dropped_samples: int = 0
    saturated: int = 0

    @property
    def total(self) -> int:
        return saturating_sum(self.counts.values())[0]

    def add(self, address: int, count: int) -> None:
        value, clamped = saturating_add(self.counts.get(address, 0), count)
        self.counts[address] = value
        self.saturated += clamped

    def drop(self, count: int = 1) -> None:
        self.dropped_samples, clamped = saturating_add(self.dropped_samples, count)
        self.saturated += clamped

    def merge(self, other: AddressProfile) -> AddressProfile:
        """Pointwise saturating sum of two profiles of the same binary."""
        merged = AddressProfile(
            dict(self.counts), self.dropped_samples, self.saturated + other.saturated
        )
        for address, count in other.counts.items():
            merged.add(address, count)
        merged.drop(other.dropped_samples)
        return merged


def build_address_profile(
    samples: SampleSet, binary: BinaryDescription
) -> AddressProfile:
    """Sum PC samples per instruction; unknown addresses are dropped."""
    require_mode(samples, SampleMode.CYCLES, "build_address_profile")
    profile = AddressProfile()
    counts = profile.counts
    instruction_at = binary.instruction_at

    for address, count in samples.pc_samples:
        if instruction_at(address) is None:
            profile.drop(count)
            continue
        value = counts.get(address, 0) + count
        if value > U64_MAX:
            value = U64_MAX
            profile.saturated += 1
        counts[address] = value

    if profile.dropped_samples:
        _LOGGER.warning(
            "%s samples resolved to no instruction", profile.dropped_samples
        )
    if profile.saturated:
        _LOGGER.warning("%s address counts saturated", profile.saturated)
    return profile


@dataclass
class KeyTally:
    count_sum: int = 0
    mapped_instructions: int = 0

    @property
    def normalized(self) -> int:
        """Mean count per mapped instruction, rounded half up."""
        return round_half_up(self.count_sum, self.mapped_instructions)


@dataclass
class SourceAccumulator:
    """Per (owning function, source key): summed counts and mapped instructions.

    Keys carry the assembler name of the function holding the instructions,
    so functions sharing a debug name never share an entry.
    """

    entries: dict[tuple[str, InlineStack], KeyTally] = field(default_factory=dict)
    samples: int = 0
    dropped_samples: int = 0
    saturated: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, key: tuple[str, InlineStack]) -> KeyTally:
        return self.entries[key]

    def __contains__(self, key) -> bool:
        return key in self.entries

    def items(self):
        return self.entries.items()

    @property
    def total(self) -> int:
        return saturating_sum(tally.count_sum for tally in self.entries.values())[0]


def to_source_accumulator(
    profile: AddressProfile, binary: BinaryDescription
) -> SourceAccumulator:
    """Group address counts by owning function and inline stack.

    Every instruction of the binary is mapped, sampled or not, so keys without
    samples are kept with a zero sum.
    """
    acc = SourceAccumulator(
        samples=profile.total,
        dropped_samples=profile.dropped_samples,
        saturated=profile.saturated,
    )
    counts = profile.counts
    for func in binary.functions:
        for insn in func.instructions():
            key = (func.asm_name, insn.source_key)
            if (tally := acc.entries.get(key)) is None:
                tally = acc.entries[key] = KeyTally()
            tally.mapped_instructions += 1
            if count := counts.get(insn.address):
                tally.count_sum, clamped = saturating_add(tally.count_sum, count)
                acc.saturated += clamped
    return acc
