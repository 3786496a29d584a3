"""Constants and data types for sampleprof sidecar formats."""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from enum import StrEnum

MAX_LBR_DEPTH = 16  # LBR ring holds 16 (from, to) pairs
COMMENT_PREFIX = "#"
INDENT = "  "  # one profile nesting level


class SampleMode(StrEnum):
    """Sampling session kind."""

    CYCLES = "cycles"
    LBR = "lbr"


class Records:
    """Record tags of the line formats."""

    # sample file
    HEADER_MODE = "mode"
    HEADER_EVENT = "event"
    HEADER_PERIOD = "period"
    SAMPLE = "S"
    BRANCH_STACK = "L"
    # binary description
    FUNC = "func"
    BLOCK = "block"
    INSN = "insn"
    INLINE = "inline"
    BRANCH_FLAG = "branch"
    # cfg description
    CFG = "cfg"
    NODE = "node"
    EDGE = "edge"
    UNRESOLVED = "unresolved"
    # ground truth
    HEAD = "head"
    ADDR = "addr"


# Record attributes (key=value tokens)
ATTR_NAME = "name"
ATTR_BFD = "bfd"
ATTR_FILE = "file"
ATTR_LINE = "line"
ATTR_RANGE = "range"
ATTR_ADDR = "addr"
ATTR_LOC = "loc"
ATTR_ID = "id"
ATTR_STMTS = "stmts"
ATTR_ENTRY = "entry"
ATTR_EXIT = "exit"
ATTR_COUNT = "count"
ATTR_TOTAL = "total"
ATTR_HEAD = "head"


###############################
#        Sample sessions      #
###############################
@dataclass(frozen=True, slots=True)
class Frame:
    """One inline-stack level: where an instruction sits in a function."""

    function: str
    file: str
    line: int
    discriminator: int = 0

    def __str__(self) -> str:
        return f"{self.function}:{self.file}:{self.line}.{self.discriminator}"


# leaf-first
InlineStack = tuple[Frame, ...]


@dataclass(frozen=True, slots=True)
class BranchStack:
    """Taken branches captured by one LBR sample, oldest-first."""

    pairs: tuple[tuple[int, int], ...]


@dataclass
class SampleSet:
    """Parsed sampling session."""

    mode: SampleMode
    event_name: str
    period: int
    pc_samples: list[tuple[int, int]] = field(default_factory=list)
    lbr_samples: list[BranchStack] = field(default_factory=list)

    @property
    def total_samples(self) -> int:
        """Sample count of the session (PC sample counts or branch stacks)."""
        if self.mode == SampleMode.CYCLES:
            return sum(count for _, count in self.pc_samples)
        return len(self.lbr_samples)

    @property
    def is_empty(self) -> bool:
        return not self.pc_samples and not self.lbr_samples


###############################
#     Binary description      #
###############################
@dataclass(slots=True)
class InstructionDesc:
    address: int
    source_key: InlineStack
    is_branch: bool = False


@dataclass
class BlockDesc:
    low: int
    high: int
    instructions: list[InstructionDesc] = field(default_factory=list)


@dataclass
class FunctionDesc:
    """A function of the binary: symbol-table name, debug name and code."""

    asm_name: str
    bfd_name: str
    file: str
    start_line: int
    low: int
    high: int
    blocks: list[BlockDesc] = field(default_factory=list)

    @property
    def entry_block(self) -> BlockDesc | None:
        """Return the block holding the function's first address."""
        for block in self.blocks:
            if block.low <= self.low < block.high:
                return block
        return None

    def contains(self, address: int) -> bool:
        return self.low <= address < self.high

    def instructions(self):
        for block in self.blocks:
            yield from block.instructions


@dataclass(frozen=True)
class InlineOrigin:
    """Declaration of a function that only exists inlined."""

    bfd_name: str
    file: str
    start_line: int


class BinaryDescription:
    """Functions, blocks and instructions of a binary plus address lookups."""

    def __init__(
        self,
        functions: list[FunctionDesc],
        inline_origins: list[InlineOrigin] | None = None,
    ):
        """Initialize and index a validated description."""
        self.functions = list(functions)
        self.inline_origins = list(inline_origins or [])

        self._instructions: dict[int, InstructionDesc] = {}
        self._block_of: dict[int, tuple[FunctionDesc, int]] = {}
        for func in self.functions:
            for index, block in enumerate(func.blocks):
                for insn in block.instructions:
                    self._instructions[insn.address] = insn
                    self._block_of[insn.address] = (func, index)
        self._addresses = sorted(self._instructions)

        self._sorted_functions = sorted(self.functions, key=lambda f: f.low)
        self._function_lows = [func.low for func in self._sorted_functions]
        self.by_asm_name = {func.asm_name: func for func in self.functions}

        self._by_bfd_file: dict[tuple[str, str], FunctionDesc] = {}
        self._by_bfd: dict[str, FunctionDesc] = {}
        for func in self.functions:
            self._by_bfd_file.setdefault((func.bfd_name, func.file), func)
            self._by_bfd.setdefault(func.bfd_name, func)

        self._start_lines = {o.bfd_name: o.start_line for o in self.inline_origins}
        self._start_lines.update({f.bfd_name: f.start_line for f in self.functions})

    def __repr__(self) -> str:
        return (
            f"BinaryDescription(functions={len(self.functions)}, "
            f"instructions={len(self._addresses)})"
        )

    @property
    def instruction_count(self) -> int:
        return len(self._addresses)

    def instructions(self):
        """Iterate over every instruction in address order."""
        for address in self._addresses:
            yield self._instructions[address]

    def instruction_at(self, address: int) -> InstructionDesc | None:
        return self._instructions.get(address)

    def block_of(self, address: int) -> tuple[FunctionDesc, int] | None:
        """Return (function, block index) of the instruction at address."""
        return self._block_of.get(address)

    def function_at(self, address: int) -> FunctionDesc | None:
        """Return the function whose range holds address."""
        index = bisect_right(self._function_lows, address) - 1
        if index < 0:
            return None
        func = self._sorted_functions[index]
        return func if func.contains(address) else None

    def addresses_between(self, low: int, high: int) -> list[int]:
        """Return instruction addresses inside the closed range [low, high]."""
        start = bisect_left(self._addresses, low)
        end = bisect_right(self._addresses, high)
        return self._addresses[start:end]

    def function_by_bfd(self, bfd_name: str, file: str | None = None):
        """Find a function by debug name, preferring an exact file match."""
        if file is not None and (func := self._by_bfd_file.get((bfd_name, file))):
            return func
        return self._by_bfd.get(bfd_name)

    def start_line_of(self, bfd_name: str) -> int | None:
        """Declaration line of a function, inlined-only ones included."""
        return self._start_lines.get(bfd_name)


###############################
#        Source profiles      #
###############################
@dataclass
class ProfileStats:
    """Conversion diagnostics carried along a profile."""

    samples: int = 0
    dropped_samples: int = 0
    unattributed_frames: int = 0
    saturated: int = 0

    def merged(self, other: ProfileStats) -> ProfileStats:
        return ProfileStats(
            self.samples + other.samples,
            self.dropped_samples + other.dropped_samples,
            self.unattributed_frames + other.unattributed_frames,
            self.saturated + other.saturated,
        )


@dataclass
class FunctionProfile:
    """Counts of one function, or of one inlined copy of it."""

    asm_name: str
    bfd_name: str
    head_count: int = 0
    total_count: int = 0
    # (offset, discriminator) -> count
    body: dict[tuple[int, int], int] = field(default_factory=dict)
    # (call-site offset, discriminator, callee bfd name) -> callee profile
    inlined: dict[tuple[int, int, str], FunctionProfile] = field(
        default_factory=dict
    )


@dataclass
class SourceProfile:
    """Source-level profile: asm_name -> FunctionProfile."""

    functions: dict[str, FunctionProfile] = field(default_factory=dict)
    stats: ProfileStats = field(default_factory=ProfileStats, compare=False)

    def __len__(self) -> int:
        return len(self.functions)


###############################
#       Control flow          #
###############################
@dataclass(frozen=True)
class CfgBlock:
    id: int
    # (offset, discriminator) keys of the block's statements
    statements: tuple[tuple[int, int], ...] = ()


@dataclass
class Cfg:
    """Control-flow graph of one function with per-block source spans."""

    asm_name: str
    start_line: int
    blocks: list[CfgBlock]
    edges: list[tuple[int, int]]
    entry: int
    exit: int

    def block_ids(self) -> list[int]:
        return [block.id for block in self.blocks]

    def incidence(self) -> tuple[dict[int, list[int]], dict[int, list[int]]]:
        """Return (in-edge indices, out-edge indices) per block id."""
        ins: dict[int, list[int]] = {block.id: [] for block in self.blocks}
        outs: dict[int, list[int]] = {block.id: [] for block in self.blocks}
        for index, (src, dst) in enumerate(self.edges):
            outs[src].append(index)
            ins[dst].append(index)
        return ins, outs


@dataclass
class EdgeProfile:
    """Block counts and propagated edge counts of one Cfg."""

    block_counts: dict[int, int]
    # aligned with Cfg.edges; unknown edges hold 0
    edge_counts: list[int]
    unknown: frozenset[int] = frozenset()
    clamped: int = 0
    rounds: int = 0

    @property
    def unresolved(self) -> int:
        return len(self.unknown)


@dataclass
class BlockProfile:
    """Execution counts per (function asm_name, block index)."""

    counts: dict[tuple[str, int], int] = field(default_factory=dict)

    def for_function(self, asm_name: str) -> dict[int, int]:
        return {
            index: count
            for (name, index), count in self.counts.items()
            if name == asm_name
        }
