"""Seeded synthetic programs, traces and samplers with exact ground truth.

A program is laid out as 4-byte instructions, functions one after the
other. Blocks fall through to their layout successor; every other edge is a
taken branch from the block's last instruction. A call block ends with a call
to a later function whose return lands on the next block. Execution enters
`main` from a stub outside the binary and returns to it, so the first and
last instructions of a trace are bracketed by taken branches like any other.
"""

from __future__ import annotations

import contextlib
import logging
import math
import os
import random
from collections import Counter, deque
from collections.abc import Iterator
from dataclasses import dataclass, field

from .attribution import AddressProfile, to_source_accumulator
from .core.formats import (
    MAX_LBR_DEPTH,
    BinaryDescription,
    BlockDesc,
    BlockProfile,
    BranchStack,
    Cfg,
    CfgBlock,
    Frame,
    FunctionDesc,
    InlineOrigin,
    InstructionDesc,
    SampleMode,
    SampleSet,
    SourceProfile,
    emit_binary_desc,
    emit_cfgs,
    emit_ground_truth,
    emit_profile,
    emit_samples,
)
from .const import DEFAULT_FUNCTIONS, DEFAULT_MAX_INSNS
from .core.helpers import atomic_write
from .profile import build_source_profile

_LOGGER = logging.getLogger(__name__)

BASE_ADDRESS = 0x400000
INSN_SIZE = 4
FUNCTION_ALIGN = 16
STUB_CALL = 0x1000
STUB_RETURN = 0x1004

CYCLES_EVENT = "UNHALTED_CORE_CYCLES"
LBR_EVENT = "BRANCH_INST_RETIRED"

START_LINE = 10
LINES_PER_BLOCK = 4
HELPER_NAME = "helper"
HELPER_FILE = "helper.h"
HELPER_LINE = 3
HELPER_SIZE = 2

MAX_BLOCK_SIZE = 5
CALL_RATE = 0.25
LOOP_RATE = 0.3
SKIP_RATE = 0.3

PROGRAM_FILE = "program.bin"
CFG_FILE = "program.cfg"
SAMPLES_FILE = "samples.txt"
TRUTH_FILE = "truth.txt"
TRUTH_PROFILE_FILE = "truth.prof"


class SimulationError(ValueError):
    """Degenerate simulator parameters or a trace foreign to its program."""


###############################
#          Programs           #
###############################
@dataclass(frozen=True)
class BranchEdge:
    """Outgoing CFG edge of a synthetic block."""

    dst: int
    probability: float
    # times the edge may be taken per activation, None for unbounded
    limit: int | None = None


@dataclass
class FunctionShape:
    """Block structure of a synthetic function before layout."""

    asm_name: str
    bfd_name: str
    block_sizes: list[int]
    # per block; the last block is the exit and has none
    successors: list[list[BranchEdge]]
    # call block -> callee function index
    calls: dict[int, int] = field(default_factory=dict)
    # one inlined helper copy per entry, hosted by that block
    inline_hosts: tuple[int, ...] = ()

    @property
    def exit_block(self) -> int:
        return len(self.block_sizes) - 1


@dataclass
class SyntheticFunction:
    shape: FunctionShape
    desc: FunctionDesc
    cfg: Cfg

    @property
    def asm_name(self) -> str:
        return self.desc.asm_name


@dataclass
class SyntheticProgram:
    """Binary description plus CFGs whose nodes are the binary's blocks."""

    binary: BinaryDescription
    functions: list[SyntheticFunction]

    def __post_init__(self):
        self.index_of = {func.asm_name: i for i, func in enumerate(self.functions)}

    @property
    def cfgs(self) -> list[Cfg]:
        return [func.cfg for func in self.functions]

    @property
    def main(self) -> SyntheticFunction:
        return self.functions[0]


def _validate_shape(index: int, shape: FunctionShape, count: int) -> None:
    name = shape.asm_name
    blocks = len(shape.block_sizes)
    if not blocks:
        raise SimulationError(f"{name}: a function needs at least one block")
    if len(shape.successors) != blocks:
        raise SimulationError(f"{name}: successors do not match the blocks")
    if any(size < 1 for size in shape.block_sizes):
        raise SimulationError(f"{name}: every block needs an instruction")
    if shape.successors[-1] or shape.exit_block in shape.calls:
        raise SimulationError(f"{name}: the exit block must end in a return")
    for block, callee in shape.calls.items():
        if not index < callee < count:
            raise SimulationError(f"{name}: block {block} must call a later function")
    for block, edges in enumerate(shape.successors[:-1]):
        if block in shape.calls:
            continue
        if not edges:
            raise SimulationError(f"{name}: block {block} has no successor")
        if any(not 0 < edge.dst < blocks for edge in edges):
            raise SimulationError(f"{name}: block {block} branches outside the body")
        if abs(sum(edge.probability for edge in edges) - 1.0) > 1e-9:
            raise SimulationError(f"{name}: probabilities of block {block} != 1")
    if any(not 0 <= host < blocks for host in shape.inline_hosts):
        raise SimulationError(f"{name}: inline host outside the body")


def _own_key(shape: FunctionShape, file: str, block: int, position: int) -> Frame:
    if block == 0 and position == shape.block_sizes[0] - 1 and position > 0:
        # second statement on the entry line
        return Frame(shape.bfd_name, file, START_LINE + 1, 1)
    line = START_LINE + 1 + LINES_PER_BLOCK * block + min(position // 2, 3)
    return Frame(shape.bfd_name, file, line)


def _helper_keys(host: Frame, copy: int) -> list[tuple[Frame, ...]]:
    site = Frame(host.function, host.file, host.line, copy)
    return [
        (Frame(HELPER_NAME, HELPER_FILE, HELPER_LINE + 1 + i), site)
        for i in range(HELPER_SIZE)
    ]


def _reachable(shape: FunctionShape) -> set[int]:
    seen = {0}
    queue = deque([0])
    while queue:
        block = queue.popleft()
        successors = [edge.dst for edge in shape.successors[block]]
        if block in shape.calls:
            successors = [block + 1]
        for dst in successors:
            if dst not in seen:
                seen.add(dst)
                queue.append(dst)
    return seen


def layout_program(shapes: list[FunctionShape]) -> SyntheticProgram:
    """Assign addresses and source keys; the first shape is main."""
    if not shapes:
        raise SimulationError("a program needs at least one function")
    cursor = BASE_ADDRESS
    functions = []
    for index, shape in enumerate(shapes):
        _validate_shape(index, shape, len(shapes))
        if len(_reachable(shape)) != len(shape.block_sizes):
            raise SimulationError(f"{shape.asm_name}: unreachable blocks")
        for block in shape.calls:
            shape.successors[block] = [BranchEdge(block + 1, 1.0)]

        file = f"{shape.bfd_name}.c"
        low = cursor
        blocks, cfg_blocks, edges = [], [], []
        for block, size in enumerate(shape.block_sizes):
            own = [_own_key(shape, file, block, i) for i in range(size)]
            keys = [(own[0],)]
            for copy, host in enumerate(shape.inline_hosts):
                if host == block:
                    keys.extend(_helper_keys(own[0], copy))
            keys.extend((frame,) for frame in own[1:])

            block_low = cursor
            insns = []
            for key in keys:
                insns.append(InstructionDesc(cursor, key))
                cursor += INSN_SIZE
            insns[-1].is_branch = (
                block in shape.calls
                or block == shape.exit_block
                or any(edge.dst != block + 1 for edge in shape.successors[block])
            )
            blocks.append(BlockDesc(block_low, cursor, insns))
            statements = sorted({(f.line - START_LINE, f.discriminator) for f in own})
            cfg_blocks.append(CfgBlock(block, tuple(statements)))
            edges.extend((block, edge.dst) for edge in shape.successors[block])

        desc = FunctionDesc(
            shape.asm_name, shape.bfd_name, file, START_LINE, low, cursor, blocks
        )
        cfg = Cfg(
            shape.asm_name, START_LINE, cfg_blocks, edges, 0, shape.exit_block
        )
        functions.append(SyntheticFunction(shape, desc, cfg))
        cursor += FUNCTION_ALIGN - cursor % FUNCTION_ALIGN + FUNCTION_ALIGN

    origins = []
    if any(shape.inline_hosts for shape in shapes):
        origins.append(InlineOrigin(HELPER_NAME, HELPER_FILE, HELPER_LINE))
    binary = BinaryDescription([func.desc for func in functions], origins)
    return SyntheticProgram(binary, functions)


def _function_names(index: int) -> tuple[str, str]:
    if index == 0:
        return "main", "main"
    bfd_name = f"fn{index}"
    return f"_Z{len(bfd_name)}{bfd_name}v", bfd_name


def gen_program(
    seed: int,
    size: int,
    functions: int = DEFAULT_FUNCTIONS,
    loops: bool = True,
) -> SyntheticProgram:
    """Generate a random program.

    main has `size` blocks, the other functions up to `size`. main hosts two
    inlined copies of `helper` and a two-statement entry line, so every
    program carries both the inline and the discriminator pattern. Without
    loops every CFG is a DAG.
    """
    if size < 1:
        raise SimulationError(f"size must be at least 1 block, got {size}")
    if functions < 1:
        raise SimulationError(f"need at least one function, got {functions}")
    rng = random.Random(seed)

    shapes = []
    for index in range(functions):
        blocks = size if index == 0 else rng.randint(1, size)
        sizes = [rng.randint(1, MAX_BLOCK_SIZE) for _ in range(blocks)]
        successors: list[list[BranchEdge]] = []
        calls: dict[int, int] = {}
        loop_end = 0
        for block in range(blocks):
            fall = block + 1
            if block == blocks - 1:
                successors.append([])
                continue
            if index < functions - 1 and rng.random() < CALL_RATE:
                calls[block] = rng.randint(index + 1, functions - 1)
                successors.append([BranchEdge(fall, 1.0)])
                continue
            roll = rng.random()
            first_target = max(1, loop_end + 1)
            if loops and roll < LOOP_RATE and first_target <= block:
                target = rng.randint(first_target, block)
                taken = round(rng.uniform(0.2, 0.6), 3)
                successors.append([BranchEdge(fall, 1 - taken), BranchEdge(target, taken)])
                loop_end = block
            elif roll < LOOP_RATE + SKIP_RATE and block + 2 < blocks:
                target = rng.randint(block + 2, blocks - 1)
                taken = round(rng.uniform(0.1, 0.9), 3)
                successors.append([BranchEdge(fall, 1 - taken), BranchEdge(target, taken)])
            else:
                successors.append([BranchEdge(fall, 1.0)])

        asm_name, bfd_name = _function_names(index)
        hosts: tuple[int, ...] = ()
        if index == 0:
            sizes[0] = max(sizes[0], 3)
            hosts = (0, blocks - 1)
        shapes.append(FunctionShape(asm_name, bfd_name, sizes, successors, calls, hosts))

    program = layout_program(shapes)
    _LOGGER.debug(
        "Generated %s functions, %s instructions",
        len(program.functions),
        program.binary.instruction_count,
    )
    return program


###############################
#           Traces            #
###############################
@dataclass
class Trace:
    """Retired instruction addresses and taken branches, in order."""

    addresses: list[int] = field(default_factory=list)
    branches: list[tuple[int, int]] = field(default_factory=list)
    truncated: bool = False


def _choose(rng: random.Random, edges: list[BranchEdge], taken: Counter, block: int):
    available = [
        i
        for i, edge in enumerate(edges)
        if edge.limit is None or taken[(block, i)] < edge.limit
    ]
    if not available:
        raise SimulationError(f"every edge out of block {block} is exhausted")
    weights = [edges[i].probability for i in available]
    if sum(weights) <= 0:
        return available[0]
    return rng.choices(available, weights)[0]


def run_trace(
    program: SyntheticProgram, seed: int, max_insns: int = DEFAULT_MAX_INSNS
) -> Trace:
    """Execute the program from main, stopping at its return or max_insns.

    The trace is cut before a block that no longer fits; the cut shows up as
    an interrupt branch from the last retired instruction to the stub.
    """
    if max_insns < 1:
        raise SimulationError(f"max_insns must be positive, got {max_insns}")
    rng = random.Random(seed)
    functions = program.functions
    trace = Trace(branches=[(STUB_CALL, program.main.desc.low)])
    addresses, branches = trace.addresses, trace.branches

    stack: list[tuple[int, int, Counter]] = []
    current, block, taken = 0, 0, Counter()
    while True:
        func = functions[current]
        insns = func.desc.blocks[block].instructions
        if len(addresses) + len(insns) > max_insns:
            trace.truncated = True
            break
        addresses.extend(insn.address for insn in insns)
        last = insns[-1].address

        if (callee := func.shape.calls.get(block)) is not None:
            branches.append((last, functions[callee].desc.low))
            stack.append((current, block + 1, taken))
            current, block, taken = callee, 0, Counter()
            continue

        edges = func.shape.successors[block]
        if not edges:
            if not stack:
                branches.append((last, STUB_RETURN))
                break
            current, block, taken = stack.pop()
            branches.append((last, functions[current].desc.blocks[block].low))
            continue

        choice = _choose(rng, edges, taken, block)
        taken[(block, choice)] += 1
        dst = edges[choice].dst
        if dst != block + 1:
            branches.append((last, func.desc.blocks[dst].low))
        block = dst

    if trace.truncated:
        if not addresses:
            branches.clear()
        elif branches[-1][0] == addresses[-1]:
            branches[-1] = (addresses[-1], STUB_RETURN)
        else:
            branches.append((addresses[-1], STUB_RETURN))
        _LOGGER.info("Trace cut at %s instructions", len(addresses))
    return trace


###############################
#          Samplers           #
###############################
def _check_sampling(period: int, jitter: float) -> None:
    if period < 1:
        raise SimulationError(f"period must be positive, got {period}")
    if not 0 <= jitter < 1:
        raise SimulationError(f"jitter must be in [0, 1), got {jitter}")


def _gaps(period: int, jitter: float, seed: int) -> Iterator[int]:
    """Distances between samples: fixed, or uniform in period*(1 -+ jitter)."""
    if not jitter:
        while True:
            yield period
    rng = random.Random(seed)
    low = max(1, math.ceil(round(period * (1 - jitter), 9)))
    high = max(low, math.floor(round(period * (1 + jitter), 9)))
    while True:
        yield rng.randint(low, high)


def sample_cycles(
    trace: Trace, period: int, jitter: float = 0.0, seed: int = 0
) -> SampleSet:
    """One PC sample (count 1) each time the retired-instruction counter overflows."""
    _check_sampling(period, jitter)
    samples = SampleSet(SampleMode.CYCLES, CYCLES_EVENT, period)
    addresses = trace.addresses
    gaps = _gaps(period, jitter, seed)
    index = next(gaps)
    while index <= len(addresses):
        samples.pc_samples.append((addresses[index - 1], 1))
        index += next(gaps)
    return samples


def sample_lbr(
    trace: Trace,
    period: int,
    depth: int = MAX_LBR_DEPTH,
    seed: int = 0,
    jitter: float = 0.0,
    ring_buffer: bool = False,
) -> SampleSet:
    """One branch stack each time the retired-branch counter overflows.

    A stack holds the branches retired since the previous stack's newest one,
    that branch included, at most `depth` of them. With ring_buffer the stack
    is the plain last `depth` branches.
    """
    _check_sampling(period, jitter)
    if not 1 <= depth <= MAX_LBR_DEPTH:
        raise SimulationError(f"depth must be in 1..{MAX_LBR_DEPTH}, got {depth}")
    samples = SampleSet(SampleMode.LBR, LBR_EVENT, period)
    branches = trace.branches
    gaps = _gaps(period, jitter, seed)
    anchor = None
    index = next(gaps)
    while index <= len(branches):
        newest = index - 1
        start = max(0, newest - depth + 1)
        if not ring_buffer and anchor is not None:
            start = max(start, anchor)
        samples.lbr_samples.append(BranchStack(tuple(branches[start : newest + 1])))
        anchor = newest
        index += next(gaps)
    return samples


###############################
#         Ground truth        #
###############################
@dataclass
class GroundTruth:
    """Exact tallies of one trace."""

    blocks: BlockProfile
    # (asm_name, src block, dst block) -> times taken
    edges: dict[tuple[str, int, int], int]
    addresses: dict[int, int]
    heads: dict[str, int]

    def edge_count(self, asm_name: str, src: int, dst: int) -> int:
        return self.edges.get((asm_name, src, dst), 0)

    def as_text(self) -> str:
        return emit_ground_truth(self.heads, self.blocks, self.edges, self.addresses)


def ground_truth(trace: Trace, program: SyntheticProgram) -> GroundTruth:
    """Replay the trace block by block, following calls and returns."""
    binary = program.binary
    functions = program.functions
    blocks = BlockProfile(
        {
            (func.asm_name, index): 0
            for func in functions
            for index in range(len(func.desc.blocks))
        }
    )
    edges: Counter = Counter()
    addresses = trace.addresses

    # [function index, current block] per activation
    stack: list[list[int]] = []
    position = 0
    while position < len(addresses):
        if (found := binary.block_of(addresses[position])) is None:
            raise SimulationError(f"0x{addresses[position]:x} is not in the program")
        desc, block = found
        current = program.index_of[desc.asm_name]
        blocks.counts[(desc.asm_name, block)] += 1
        position += len(desc.blocks[block].instructions)

        if stack:
            caller, site = stack[-1]
            if functions[caller].shape.calls.get(site) == current and block == 0:
                stack.append([current, block])
                continue
            while stack and stack[-1][0] != current:
                stack.pop()
        if not stack:
            stack.append([current, block])
            continue
        edges[(desc.asm_name, stack[-1][1], block)] += 1
        stack[-1][1] = block

    tally = Counter(addresses)
    return GroundTruth(
        blocks=blocks,
        edges=dict(edges),
        addresses=dict(tally),
        heads={func.asm_name: tally.get(func.desc.low, 0) for func in functions},
    )


def oracle_profile(program: SyntheticProgram, truth: GroundTruth) -> SourceProfile:
    """The exact source profile: the conversion pipeline fed with true tallies."""
    acc = to_source_accumulator(AddressProfile(dict(truth.addresses)), program.binary)
    return build_source_profile(acc, program.binary, truth.heads)


###############################
#           Sessions          #
###############################
@dataclass
class Session:
    program: SyntheticProgram
    trace: Trace
    samples: SampleSet
    truth: GroundTruth


def simulate_session(
    seed: int,
    size: int,
    mode: SampleMode,
    period: int,
    functions: int = DEFAULT_FUNCTIONS,
    jitter: float = 0.0,
    depth: int = MAX_LBR_DEPTH,
    max_insns: int = DEFAULT_MAX_INSNS,
    loops: bool = True,
) -> Session:
    """Generate, run and sample one program; every stage seeded from seed."""
    program = gen_program(seed, size, functions, loops)
    trace = run_trace(program, seed + 1, max_insns)
    if mode == SampleMode.CYCLES:
        samples = sample_cycles(trace, period, jitter, seed + 2)
    else:
        samples = sample_lbr(trace, period, depth, seed + 2, jitter)
    return Session(program, trace, samples, ground_truth(trace, program))


def write_session(out_dir: str, session: Session) -> list[str]:
    """Write the sidecars, samples and ground truth of a session.

    Either every file is written or none is left behind.
    """
    created = not os.path.isdir(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    program, truth = session.program, session.truth
    contents = {
        PROGRAM_FILE: emit_binary_desc(program.binary),
        CFG_FILE: emit_cfgs(program.cfgs),
        SAMPLES_FILE: emit_samples(session.samples),
        TRUTH_FILE: truth.as_text(),
        TRUTH_PROFILE_FILE: emit_profile(oracle_profile(program, truth)),
    }
    written: list[str] = []
    try:
        for name, content in contents.items():
            path = os.path.join(out_dir, name)
            atomic_write(path, content)
            written.append(path)
    except OSError:
        _LOGGER.debug("Removing partial session %s", out_dir)
        for path in written:
            with contextlib.suppress(OSError):
                os.unlink(path)
        if created:
            with contextlib.suppress(OSError):
                os.rmdir(out_dir)
        raise
    _LOGGER.debug("Wrote %s", ", ".join(written))
    return written
