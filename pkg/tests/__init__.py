"""Init sampleprof tests"""

import os
import random
import pytest

from collections import Counter

from sampleprof.core.formats import (
    BinaryDescription,
    BranchStack,
    Cfg,
    CfgBlock,
    Frame,
    FunctionProfile,
    SampleMode,
    SampleSet,
    SourceProfile,
    parse_binary_desc,
)
from sampleprof.profile import recompute_totals
from sampleprof.simulate import (
    BranchEdge,
    FunctionShape,
    gen_program,
    ground_truth,
    layout_program,
    run_trace,
    sample_lbr,
)

MAIN_LOW = 0x400100
FOO_LOW = 0x400500

BINARY_DESC = """\
# two functions, main inlines two copies of hot
inline bfd=hot file=inline.h line=1
func name=main bfd=main file=main.c line=10 range=0x400100-0x400120
block range=0x400100-0x400110
insn addr=0x400100 loc=main:main.c:12.0
insn addr=0x400104 loc=main:main.c:12.0
insn addr=0x400108 loc=main:main.c:12.0
insn addr=0x40010c loc=main:main.c:12.0 branch
block range=0x400110-0x400120
insn addr=0x400110 loc=hot:inline.h:3.1;main:main.c:20.0
insn addr=0x400114 loc=hot:inline.h:3.1;main:main.c:21.0
insn addr=0x400118 loc=main:main.c:22.0
insn addr=0x40011c loc=main:main.c:23.0 branch
func name=_Z3foov bfd=foo file=foo.c line=5 range=0x400500-0x400510
block range=0x400500-0x400510
insn addr=0x400500 loc=foo:foo.c:6.0
insn addr=0x400504 loc=foo:foo.c:7.0
insn addr=0x400508 loc=foo:foo.c:7.1
insn addr=0x40050c loc=foo:foo.c:8.0 branch
"""

# instructions at 0x100..0x10c in one block
SMALL_BINARY_DESC = """\
func name=f bfd=f file=f.c line=1 range=0x100-0x110
block range=0x100-0x110
insn addr=0x100 loc=f:f.c:2.0
insn addr=0x104 loc=f:f.c:3.0
insn addr=0x108 loc=f:f.c:4.0
insn addr=0x10c loc=f:f.c:5.0 branch
func name=g bfd=g file=g.c line=1 range=0x200-0x208
block range=0x200-0x208
insn addr=0x200 loc=g:g.c:2.0
insn addr=0x204 loc=g:g.c:3.0 branch
"""

PROFILE_TEXT = """\
main total:30 head:2
  0.0: 10
  2.1: 20
"""

CFG_DIAMOND = """\
cfg name=main line=10 entry=0 exit=3
node id=0 stmts=0.0
node id=1 stmts=2.0,3.0
node id=2 stmts=4.0
node id=3 stmts=6.0
edge 0->1
edge 0->2
edge 1->3
edge 2->3
"""


def binary() -> BinaryDescription:
    return parse_binary_desc(BINARY_DESC, "binary.txt")


def small_binary() -> BinaryDescription:
    return parse_binary_desc(SMALL_BINARY_DESC, "small.txt")


# two overloads sharing one debug name, the second declared on a lower line
OVERLOADS_DESC = """\
func name=_Z3fooi bfd=foo file=a.cc line=10 range=0x100-0x108
block range=0x100-0x108
insn addr=0x100 loc=foo:a.cc:11.0
insn addr=0x104 loc=foo:a.cc:12.0 branch
func name=_Z3food bfd=foo file=a.cc line=5 range=0x200-0x208
block range=0x200-0x208
insn addr=0x200 loc=foo:a.cc:6.0
insn addr=0x204 loc=foo:a.cc:12.0 branch
"""


def overloads() -> BinaryDescription:
    return parse_binary_desc(OVERLOADS_DESC, "overloads.txt")


def samples_text(mode: str, records: list[str], period: int = 1) -> str:
    header = [f"mode: {mode}", "event: EVENT", f"period: {period}"]
    return "\n".join(header + records) + "\n"


def lbr_samples(*stacks) -> SampleSet:
    samples = SampleSet(SampleMode.LBR, "BRANCH_INST_RETIRED", 1)
    samples.lbr_samples.extend(BranchStack(tuple(stack)) for stack in stacks)
    return samples


def pc_samples(*pairs) -> SampleSet:
    return SampleSet(SampleMode.CYCLES, "UNHALTED_CORE_CYCLES", 1, list(pairs))


def function_profile(name, body, head=0, inlined=None, bfd=None) -> FunctionProfile:
    profile = FunctionProfile(name, bfd or name, head, 0, dict(body), dict(inlined or {}))
    wrapper = SourceProfile({name: profile})
    recompute_totals(wrapper)
    return profile


def source_profile(*functions: FunctionProfile) -> SourceProfile:
    return SourceProfile({function.asm_name: function for function in functions})


def _random_body(rng: random.Random, depth: int) -> FunctionProfile:
    name = rng.choice(["inl_a", "inl_b", "inl_c"])
    body = {
        (rng.randint(0, 40), rng.randint(0, 3)): rng.randint(1, 10_000)
        for _ in range(rng.randint(1, 5))
    }
    inlined = {}
    if depth < 2:
        for _ in range(rng.randint(0, 2)):
            callee = _random_body(rng, depth + 1)
            inlined[(rng.randint(0, 40), rng.randint(0, 3), callee.bfd_name)] = callee
    return FunctionProfile(name, name, 0, 0, body, inlined)


BFD_NAMES = {"_Z3foov": "foo", "_Z3barv": "bar"}


def random_profile(rng: random.Random) -> SourceProfile:
    """A valid random profile: no zero entries, totals consistent."""
    profile = SourceProfile()
    for name in rng.sample(["main", "_Z3foov", "_Z3barv", "baz", "qux"], rng.randint(0, 4)):
        function = _random_body(rng, 0)
        function.asm_name = name
        function.bfd_name = BFD_NAMES.get(name, name)
        function.head_count = rng.randint(0, 50)
        profile.functions[name] = function
    recompute_totals(profile)
    return profile


def diamond_cfg() -> Cfg:
    return Cfg(
        "main",
        10,
        [
            CfgBlock(0, ((0, 0),)),
            CfgBlock(1, ((2, 0), (3, 0))),
            CfgBlock(2, ((4, 0),)),
            CfgBlock(3, ((6, 0),)),
        ],
        [(0, 1), (0, 2), (1, 3), (2, 3)],
        0,
        3,
    )


def loop_program(iterations: int, body_sizes=(2, 3, 4)):
    """main: entry, a loop over body_sizes repeated `iterations` times, exit."""
    count = len(body_sizes)
    successors = [[BranchEdge(1, 1.0)]]
    for index in range(count - 1):
        successors.append([BranchEdge(index + 2, 1.0)])
    successors.append(
        [BranchEdge(count + 1, 0.0), BranchEdge(1, 1.0, limit=iterations - 1)]
    )
    successors.append([])
    shape = FunctionShape("main", "main", [1, *body_sizes, 1], successors)
    return layout_program([shape])


def lossless(seed: int, size: int = 6, functions: int = 3, max_insns: int = 20_000, loops=True):
    """Program, trace, period-1 full depth LBR samples and ground truth."""
    program = gen_program(seed, size, functions, loops)
    trace = run_trace(program, seed + 1, max_insns)
    samples = sample_lbr(trace, 1, 16)
    return program, trace, samples, ground_truth(trace, program)


def write(tmp_path, name: str, text: str) -> str:
    path = os.path.join(str(tmp_path), name)
    with open(path, "w", encoding="utf-8") as out:
        out.write(text)
    return path


def read(path) -> str:
    with open(path, encoding="utf-8") as in_file:
        return in_file.read()


def body_sum(profile: FunctionProfile) -> int:
    return sum(profile.body.values()) + sum(body_sum(c) for c in profile.inlined.values())
