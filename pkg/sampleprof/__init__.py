"""Turn hardware sample sessions into source-level profiles."""

import logging

from .attribution import build_address_profile, to_source_accumulator
from .core.formats import BinaryDescription, SampleMode, SampleSet, SourceProfile
from .lbr import block_counts, expand_block_counts, walk_ranges
from .profile import build_source_profile, compute_head_counts

__version__ = "1.0.0"

_LOGGER = logging.getLogger(__name__)


def convert_session(samples: SampleSet, binary: BinaryDescription) -> SourceProfile:
    """Convert a sampling session into a source profile.

    LBR sessions give every instruction of a block the block's count before
    grouping by source key.
    """
    if samples.mode == SampleMode.CYCLES:
        addresses = build_address_profile(samples, binary)
        heads = compute_head_counts(samples, binary, addresses)
    else:
        walked = walk_ranges(samples, binary)
        addresses = expand_block_counts(block_counts(walked, binary), binary)
        addresses.dropped_samples = walked.dropped_samples
        addresses.saturated = walked.saturated
        heads = compute_head_counts(samples, binary)

    acc = to_source_accumulator(addresses, binary)
    profile = build_source_profile(acc, binary, heads)
    profile.stats.samples = samples.total_samples
    _LOGGER.debug(
        "Converted %s %s samples into %s functions",
        samples.total_samples,
        samples.mode,
        len(profile),
    )
    return profile
