"""Source level profile: build, head counts, merge, summary."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

from .attribution import AddressProfile, SourceAccumulator, build_address_profile
from .const import DEFAULT_TOP
from .core.formats import (
    BinaryDescription,
    FunctionDesc,
    FunctionProfile,
    InlineStack,
    ProfileStats,
    SampleMode,
    SampleSet,
    SourceProfile,
)
from .core.helpers import U64_MAX, saturating_add
from .lbr import block_counts

_LOGGER = logging.getLogger(__name__)


###############################
#           Totals            #
###############################
def _recompute_total(profile: FunctionProfile) -> int:
    """Set total_count bottom-up; returns the number of saturation events."""
    saturated = 0
    total = 0
    for count in profile.body.values():
        total, clamped = saturating_add(total, count)
        saturated += clamped
    for callee in profile.inlined.values():
        saturated += _recompute_total(callee)
        total, clamped = saturating_add(total, callee.total_count)
        saturated += clamped
    profile.total_count = total
    return saturated


def recompute_totals(profile: SourceProfile) -> int:
    return sum(_recompute_total(func) for func in profile.functions.values())


def _check_function(profile: FunctionProfile, path: str, problems: list[str]):
    expected = sum(profile.body.values()) + sum(
        callee.total_count for callee in profile.inlined.values()
    )
    if min(expected, U64_MAX) != profile.total_count:
        problems.append(f"{path}: total {profile.total_count} != {expected}")
    for (offset, disc, name), callee in profile.inlined.items():
        _check_function(callee, f"{path}/{offset}.{disc}:{name}", problems)


def check_totals(profile: SourceProfile) -> list[str]:
    """Return every (nested) function whose total breaks the sum invariant."""
    problems: list[str] = []
    for asm_name, function in sorted(profile.functions.items()):
        _check_function(function, asm_name, problems)
    return problems


###############################
#            Build            #
###############################
class _ProfileBuilder:
    """Place normalized source key counts into nested function profiles."""

    def __init__(self, binary: BinaryDescription):
        self.binary = binary
        self.profile = SourceProfile()
        self.unattributed = 0
        self.saturated = 0
        self._unknown_callees: set[str] = set()

    def function(self, func: FunctionDesc) -> FunctionProfile:
        if (found := self.profile.functions.get(func.asm_name)) is None:
            found = FunctionProfile(func.asm_name, func.bfd_name)
            self.profile.functions[func.asm_name] = found
        return found

    def _start_line(self, bfd_name: str) -> int:
        if (line := self.binary.start_line_of(bfd_name)) is not None:
            return line
        if bfd_name not in self._unknown_callees:
            self._unknown_callees.add(bfd_name)
            _LOGGER.warning(
                "No start line for inlined function %s, using absolute lines",
                bfd_name,
            )
        return 0

    def _top_level(
        self, owner: FunctionDesc, key: InlineStack
    ) -> tuple[FunctionDesc, int] | None:
        """Return the top-level function and the index of its frame in key.

        The function holding the instructions wins; a stack that never names
        it falls back to the outermost frame naming any known function.
        """
        for exact in (True, False):
            for index in range(len(key) - 1, -1, -1):
                frame = key[index]
                if frame.function == owner.bfd_name and (
                    frame.file == owner.file or not exact
                ):
                    return owner, index
        for index in range(len(key) - 1, -1, -1):
            frame = key[index]
            if func := self.binary.function_by_bfd(frame.function, frame.file):
                return func, index
        return None

    def add(self, owner: FunctionDesc, key: InlineStack, count: int) -> None:
        if (top := self._top_level(owner, key)) is None:
            self.unattributed += 1
            _LOGGER.warning("Dropping %s: no frame names a known function", key[-1])
            return
        func, index = top
        if index != len(key) - 1:
            self.unattributed += 1
            _LOGGER.warning(
                "Unknown caller %s, attributing to %s", key[-1], func.asm_name
            )

        # call-site path from the top-level function down to the leaf
        path = []
        start_line = func.start_line
        for level in range(index, 0, -1):
            site, callee = key[level], key[level - 1]
            path.append((site.line - start_line, site.discriminator, callee.function))
            start_line = self._start_line(callee.function)
        leaf = key[0]
        entry = (leaf.line - start_line, leaf.discriminator)
        if entry[0] < 0 or any(offset < 0 for offset, _, _ in path):
            _LOGGER.warning("Dropping %s: negative line offset", key[0])
            self.unattributed += 1
            return

        profile = self.function(func)
        for site in path:
            if (child := profile.inlined.get(site)) is None:
                child = profile.inlined[site] = FunctionProfile(site[2], site[2])
            profile = child
        value, clamped = saturating_add(profile.body.get(entry, 0), count)
        profile.body[entry] = value
        self.saturated += clamped


def build_source_profile(
    acc: SourceAccumulator, binary: BinaryDescription, head: dict[str, int]
) -> SourceProfile:
    """Build the nested profile from normalized source key counts."""
    builder = _ProfileBuilder(binary)
    for (asm_name, key), tally in acc.items():
        if count := tally.normalized:
            builder.add(binary.by_asm_name[asm_name], key, count)
    for asm_name, count in sorted(head.items()):
        if count and (func := binary.by_asm_name.get(asm_name)):
            builder.function(func).head_count = count

    profile = builder.profile
    saturated = recompute_totals(profile)
    profile.stats = ProfileStats(
        samples=acc.samples,
        dropped_samples=acc.dropped_samples,
        unattributed_frames=builder.unattributed,
        saturated=acc.saturated + builder.saturated + saturated,
    )
    if profile.stats.saturated:
        _LOGGER.warning("%s counts saturated", profile.stats.saturated)
    return profile


def _entry_index(func: FunctionDesc) -> int | None:
    for index, block in enumerate(func.blocks):
        if block.low <= func.low < block.high:
            return index
    return None


def compute_head_counts(
    samples: SampleSet,
    binary: BinaryDescription,
    addresses: AddressProfile | None = None,
) -> dict[str, int]:
    """Count function entries.

    LBR sessions count branches landing on a function's first address. The
    newest pair of a stack is skipped like the range it would open, so stacks
    sharing one pair count each entry once. Cycles sessions use the
    normalized count of the entry block, taken from addresses when the
    caller already built them.
    """
    heads = {func.asm_name: 0 for func in binary.functions}
    if samples.mode == SampleMode.LBR:
        entries = {func.low: func.asm_name for func in binary.functions}
        for stack in samples.lbr_samples:
            for _, target in stack.pairs[:-1]:
                if (name := entries.get(target)) is not None:
                    heads[name] += 1
        return heads

    if addresses is None:
        addresses = build_address_profile(samples, binary)
    blocks = block_counts(addresses, binary)
    for func in binary.functions:
        if (index := _entry_index(func)) is not None:
            heads[func.asm_name] = blocks.counts[(func.asm_name, index)]
    return heads


###############################
#            Merge            #
###############################
def _merge_into(dst: FunctionProfile, src: FunctionProfile) -> int:
    saturated = 0
    dst.head_count, clamped = saturating_add(dst.head_count, src.head_count)
    saturated += clamped
    for key, count in src.body.items():
        dst.body[key], clamped = saturating_add(dst.body.get(key, 0), count)
        saturated += clamped
    for key, callee in src.inlined.items():
        if key in dst.inlined:
            saturated += _merge_into(dst.inlined[key], callee)
        else:
            dst.inlined[key] = copy.deepcopy(callee)
    return saturated


def merge(a: SourceProfile, b: SourceProfile) -> SourceProfile:
    """Pointwise saturating sum of two profiles."""
    result = SourceProfile(copy.deepcopy(a.functions), a.stats.merged(b.stats))
    saturated = 0
    for asm_name, function in b.functions.items():
        if asm_name in result.functions:
            saturated += _merge_into(result.functions[asm_name], function)
        else:
            result.functions[asm_name] = copy.deepcopy(function)
    saturated += recompute_totals(result)
    if saturated:
        _LOGGER.warning("%s counts saturated while merging", saturated)
        result.stats.saturated += saturated
    return result


def prune_cold(profile: SourceProfile, min_total: int) -> SourceProfile:
    """Drop top-level functions whose total is below min_total."""
    kept = {
        name: copy.deepcopy(function)
        for name, function in profile.functions.items()
        if function.total_count >= min_total
    }
    if dropped := len(profile.functions) - len(kept):
        _LOGGER.info("Pruned %s functions below %s samples", dropped, min_total)
    return SourceProfile(kept, copy.copy(profile.stats))


###############################
#           Summary           #
###############################
@dataclass
class ProfileSummary:
    function_count: int = 0
    total_samples: int = 0
    head_samples: int = 0
    hottest: list[tuple[str, int]] = field(default_factory=list)
    stats: ProfileStats = field(default_factory=ProfileStats)

    def as_lines(self) -> list[str]:
        lines = [
            f"functions: {self.function_count}",
            f"total samples: {self.total_samples}",
            f"head samples: {self.head_samples}",
            f"raw samples: {self.stats.samples}",
            f"dropped samples: {self.stats.dropped_samples}",
            f"unattributed frames: {self.stats.unattributed_frames}",
            f"saturated counts: {self.stats.saturated}",
        ]
        if self.hottest:
            lines.append("hottest:")
            lines.extend(f"  {name} {total}" for name, total in self.hottest)
        return lines


def summarize(profile: SourceProfile, top: int = DEFAULT_TOP) -> ProfileSummary:
    """Function count, totals and the top hottest functions."""
    functions = profile.functions.values()
    ranked = sorted(functions, key=lambda f: (-f.total_count, f.asm_name))
    return ProfileSummary(
        function_count=len(profile.functions),
        total_samples=sum(function.total_count for function in functions),
        head_samples=sum(function.head_count for function in functions),
        hottest=[(func.asm_name, func.total_count) for func in ranked[:top]],
        stats=copy.copy(profile.stats),
    )
