"""Test for cycles-mode attribution."""

from . import *
from sampleprof.attribution import (
    AddressProfile,
    KeyTally,
    ModeError,
    build_address_profile,
    resolve,
    to_source_accumulator,
)
from sampleprof.core.helpers import U64_MAX
from sampleprof.simulate import sample_cycles

MAIN_LINE_12 = (Frame("main", "main.c", 12),)
HOT_AT_20 = (Frame("hot", "inline.h", 3, 1), Frame("main", "main.c", 20))
HOT_AT_21 = (Frame("hot", "inline.h", 3, 1), Frame("main", "main.c", 21))


def test_resolve():
    desc = binary()

    assert resolve(0x400104, desc) == MAIN_LINE_12
    assert resolve(0x400110, desc) == HOT_AT_20
    # inside a function but not on an instruction boundary
    assert resolve(0x400102, desc) is None
    assert resolve(0x400300, desc) is None


def test_build_address_profile_sums_and_drops():
    samples = pc_samples((0x400100, 2), (0x400100, 3), (0x400300, 4), (0x400504, 1))
    profile = build_address_profile(samples, binary())

    assert profile.counts == {0x400100: 5, 0x400504: 1}
    assert profile.dropped_samples == 4
    assert profile.total == 6


def test_build_address_profile_empty():
    profile = build_address_profile(pc_samples(), binary())

    assert profile.counts == {}
    assert profile.total == 0
    assert profile.dropped_samples == 0


def test_build_address_profile_rejects_lbr():
    with pytest.raises(ModeError):
        build_address_profile(lbr_samples(), binary())


def test_build_address_profile_saturates():
    samples = pc_samples((0x400100, U64_MAX), (0x400100, 5))
    profile = build_address_profile(samples, binary())

    assert profile.counts[0x400100] == U64_MAX
    assert profile.saturated == 1


def test_address_profile_matches_trace_tally():
    program = gen_program(4, 6)
    trace = run_trace(program, 5)
    samples = sample_cycles(trace, 1)

    profile = build_address_profile(samples, program.binary)

    assert profile.counts == Counter(trace.addresses)
    assert profile.dropped_samples == 0


def test_address_profile_merge():
    left = AddressProfile({0x10: 2, 0x14: 1}, dropped_samples=1)
    right = AddressProfile({0x14: 3, 0x18: 4}, dropped_samples=2)

    merged = left.merge(right)

    assert merged.counts == {0x10: 2, 0x14: 4, 0x18: 4}
    assert merged.dropped_samples == 3
    assert left.counts == {0x10: 2, 0x14: 1}


def test_key_tally_normalized():
    assert KeyTally(16, 4).normalized == 4
    assert KeyTally(10, 4).normalized == 3
    assert KeyTally(9, 4).normalized == 2
    assert KeyTally(0, 3).normalized == 0


def test_source_accumulator_groups_by_key():
    desc = binary()
    samples = pc_samples((0x400100, 10), (0x400104, 6))
    acc = to_source_accumulator(build_address_profile(samples, desc), desc)

    assert acc["main", MAIN_LINE_12] == KeyTally(16, 4)
    assert acc["main", MAIN_LINE_12].normalized == 4
    assert acc.samples == 16


def test_source_accumulator_keeps_unsampled_keys():
    desc = binary()
    acc = to_source_accumulator(AddressProfile(), desc)

    key = (Frame("main", "main.c", 22),)
    assert ("main", key) in acc
    assert acc["main", key] == KeyTally(0, 1)
    assert len(acc) == len({insn.source_key for insn in desc.instructions()})


def test_source_accumulator_inline_copies_stay_apart():
    desc = binary()
    acc = to_source_accumulator(AddressProfile({0x400110: 7, 0x400114: 1}), desc)

    assert acc["main", HOT_AT_20] == KeyTally(7, 1)
    assert acc["main", HOT_AT_21] == KeyTally(1, 1)


def test_source_accumulator_splits_shared_debug_names():
    acc = to_source_accumulator(AddressProfile({0x104: 3, 0x204: 5}), overloads())

    key = (Frame("foo", "a.cc", 12),)
    assert acc["_Z3fooi", key] == KeyTally(3, 1)
    assert acc["_Z3food", key] == KeyTally(5, 1)
    assert len(acc) == 4


def test_source_accumulator_conserves_samples():
    program = gen_program(9, 7)
    trace = run_trace(program, 10)
    profile = build_address_profile(sample_cycles(trace, 3), program.binary)

    acc = to_source_accumulator(profile, program.binary)

    assert acc.total == profile.total
    assert sum(tally.mapped_instructions for _, tally in acc.items()) == (
        program.binary.instruction_count
    )
