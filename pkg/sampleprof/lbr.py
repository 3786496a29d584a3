"""Last Branch Record decoding: branch stacks to instruction and block counts."""

from __future__ import annotations

import logging

from .attribution import AddressProfile, require_mode
from .core.formats import (
    BinaryDescription,
    BlockProfile,
    BranchStack,
    SampleMode,
    SampleSet,
)
from .core.helpers import round_half_up, saturating_sum

_LOGGER = logging.getLogger(__name__)


def _walk_stack(
    stack: BranchStack, binary: BinaryDescription, profile: AddressProfile
) -> None:
    pairs = stack.pairs
    for (_, start), (end, _) in zip(pairs, pairs[1:]):
        if start > end:
            _LOGGER.debug("Dropping backwards range 0x%x-0x%x", start, end)
            profile.drop()
            continue
        func = binary.function_at(start)
        if func is None or func is not binary.function_at(end):
            _LOGGER.debug("Dropping cross-function range 0x%x-0x%x", start, end)
            profile.drop()
            continue
        for address in binary.addresses_between(start, end):
            profile.add(address, 1)


def walk_ranges(samples: SampleSet, binary: BinaryDescription) -> AddressProfile:
    """Count instructions executed between consecutive branches of each stack.

    Pair i's target up to pair i+1's source is a closed straight-line range;
    a stack of k pairs yields k-1 ranges.
    """
    require_mode(samples, SampleMode.LBR, "walk_ranges")
    profile = AddressProfile()
    for stack in samples.lbr_samples:
        _walk_stack(stack, binary, profile)

    if profile.dropped_samples:
        _LOGGER.warning(
            "%s branch ranges dropped (backwards or crossing functions)",
            profile.dropped_samples,
        )
    return profile


def block_counts(profile: AddressProfile, binary: BinaryDescription) -> BlockProfile:
    """Mean instruction count of every block, rounded half up."""
    counts = profile.counts
    result = BlockProfile()
    for func in binary.functions:
        for index, block in enumerate(func.blocks):
            total, _ = saturating_sum(
                counts.get(insn.address, 0) for insn in block.instructions
            )
            result.counts[(func.asm_name, index)] = round_half_up(
                total, len(block.instructions)
            )
    return result


def expand_block_counts(
    blocks: BlockProfile, binary: BinaryDescription
) -> AddressProfile:
    """Give every instruction its block's count."""
    profile = AddressProfile()
    for (asm_name, index), count in blocks.counts.items():
        if not count:
            continue
        for insn in binary.by_asm_name[asm_name].blocks[index].instructions:
            profile.counts[insn.address] = count
    return profile
