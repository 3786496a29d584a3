"""Test for source profile building, merging and summaries."""

from . import *
from sampleprof import convert_session
from sampleprof.attribution import AddressProfile, to_source_accumulator
from sampleprof.core.formats import emit_profile
from sampleprof.core.helpers import U64_MAX
from sampleprof.profile import (
    build_source_profile,
    check_totals,
    compute_head_counts,
    merge,
    prune_cold,
    summarize,
)
from sampleprof.simulate import sample_cycles


def one_function(*locs: str) -> BinaryDescription:
    """main (start line 10) with one instruction per loc, from 0x10."""
    lines = [
        f"func name=main bfd=main file=main.c line=10 range=0x10-0x{0x10 + 4 * len(locs):x}",
        f"block range=0x10-0x{0x10 + 4 * len(locs):x}",
    ]
    lines.extend(
        f"insn addr=0x{0x10 + 4 * index:x} loc={loc}" for index, loc in enumerate(locs)
    )
    return parse_binary_desc("\n".join(lines))


def build(desc: BinaryDescription, counts: dict, head=None) -> SourceProfile:
    acc = to_source_accumulator(AddressProfile(dict(counts)), desc)
    return build_source_profile(acc, desc, head or {})


def flatten(profile: FunctionProfile, path=()) -> dict:
    entries = {path + key: count for key, count in profile.body.items()}
    for site, callee in profile.inlined.items():
        entries.update(flatten(callee, path + site))
    return entries


def test_build_single_function():
    profile = build(binary(), {0x400100: 10, 0x400104: 6})
    main = profile.functions["main"]

    assert list(profile.functions) == ["main"]
    assert main.body == {(2, 0): 4}
    assert main.total_count == 4
    assert main.inlined == {}


def test_build_inlined_copy():
    profile = build(binary(), {0x400110: 5})
    main = profile.functions["main"]

    assert list(main.inlined) == [(10, 0, "hot")]
    hot = main.inlined[(10, 0, "hot")]
    assert hot.body == {(2, 1): 5}
    assert hot.total_count == 5
    assert main.body == {}
    assert main.total_count == 5


def test_build_two_inlined_copies_stay_apart():
    profile = build(binary(), {0x400110: 5, 0x400114: 2})
    main = profile.functions["main"]

    assert main.inlined[(10, 0, "hot")].body == {(2, 1): 5}
    assert main.inlined[(11, 0, "hot")].body == {(2, 1): 2}
    assert main.total_count == 7


def test_build_mangled_function():
    profile = build(binary(), {0x400508: 3})
    foo = profile.functions["_Z3foov"]

    assert foo.bfd_name == "foo"
    assert foo.body == {(2, 1): 3}


def test_build_empty():
    profile = build(binary(), {})

    assert profile.functions == {}
    assert emit_profile(profile) == ""


def test_build_keeps_head_only_function():
    profile = build(binary(), {}, head={"_Z3foov": 3, "main": 0})

    assert list(profile.functions) == ["_Z3foov"]
    assert profile.functions["_Z3foov"].head_count == 3
    assert profile.functions["_Z3foov"].total_count == 0
    assert emit_profile(profile) == "_Z3foov total:0 head:3 bfd:foo\n"


def test_build_overloads_keep_their_samples():
    profile = build(overloads(), {0x100: 3, 0x104: 1, 0x200: 5, 0x204: 2})

    assert profile.functions["_Z3fooi"].body == {(1, 0): 3, (2, 0): 1}
    assert profile.functions["_Z3food"].body == {(1, 0): 5, (7, 0): 2}
    assert profile.functions["_Z3food"].bfd_name == "foo"
    assert profile.stats.unattributed_frames == 0


def test_convert_overloads():
    samples = pc_samples((0x100, 3), (0x200, 5))
    profile = convert_session(samples, overloads())

    assert emit_profile(profile) == (
        "_Z3food total:5 head:3 bfd:foo\n"
        "  1.0: 5\n"
        "_Z3fooi total:3 head:2 bfd:foo\n"
        "  1.0: 3\n"
    )


def test_build_unknown_caller():
    desc = one_function("main:main.c:12.0;mystery:m.c:40.0")
    profile = build(desc, {0x10: 6})

    assert profile.functions["main"].body == {(2, 0): 6}
    assert profile.stats.unattributed_frames == 1


def test_build_no_known_frame():
    desc = one_function("ghost:g.c:3.0")
    profile = build(desc, {0x10: 6})

    assert profile.functions == {}
    assert profile.stats.unattributed_frames == 1


def test_build_unknown_callee_uses_absolute_lines(caplog):
    desc = one_function("mystery:m.c:7.0;main:main.c:12.0", "mystery:m.c:8.0;main:main.c:12.0")
    profile = build(desc, {0x10: 6, 0x14: 2})

    callee = profile.functions["main"].inlined[(2, 0, "mystery")]
    assert callee.body == {(7, 0): 6, (8, 0): 2}
    assert caplog.text.count("No start line for inlined function mystery") == 1


def test_build_drops_negative_offsets():
    desc = one_function("main:main.c:5.0", "main:main.c:11.0")
    profile = build(desc, {0x10: 6, 0x14: 1})

    assert profile.functions["main"].body == {(1, 0): 1}
    assert profile.stats.unattributed_frames == 1


def test_build_stats():
    desc = binary()
    acc = to_source_accumulator(AddressProfile({0x400100: 4}, dropped_samples=3), desc)
    profile = build_source_profile(acc, desc, {})

    assert profile.stats.samples == 4
    assert profile.stats.dropped_samples == 3


def test_build_body_sum_matches_normalized_keys():
    program = gen_program(13, 9)
    desc = program.binary
    trace = run_trace(program, 14)
    acc = to_source_accumulator(AddressProfile(dict(Counter(trace.addresses))), desc)

    profile = build_source_profile(acc, desc, {})

    expected = sum(tally.normalized for _, tally in acc.items())
    assert sum(body_sum(function) for function in profile.functions.values()) == expected
    assert check_totals(profile) == []


def test_head_counts_lbr():
    stack = [(0x40010C, FOO_LOW), (0x40050C, 0x400110)]
    heads = compute_head_counts(lbr_samples(stack, stack), binary())

    assert heads == {"main": 0, "_Z3foov": 2}


def test_head_counts_lbr_skip_newest_pair():
    heads = compute_head_counts(lbr_samples([(0x40010C, FOO_LOW)]), binary())
    assert heads["_Z3foov"] == 0


def test_head_counts_cycles():
    samples = pc_samples(*((FOO_LOW + 4 * index, 7) for index in range(4)))
    heads = compute_head_counts(samples, binary())

    assert heads == {"main": 0, "_Z3foov": 7}


def test_head_counts_cycles_reuse_addresses():
    samples = pc_samples((FOO_LOW, 40))
    addresses = AddressProfile({FOO_LOW: 4, FOO_LOW + 4: 4})

    assert compute_head_counts(samples, binary(), addresses)["_Z3foov"] == 2


def test_convert_warns_about_dropped_samples_once(caplog):
    convert_session(pc_samples((0x400300, 4), (FOO_LOW, 1)), binary())
    assert caplog.text.count("resolved to no instruction") == 1


def test_head_counts_match_truth():
    program, trace, samples, truth = lossless(21)
    assert compute_head_counts(samples, program.binary) == truth.heads


def test_merge_adds():
    a = source_profile(function_profile("main", {(0, 0): 10}, head=1))
    b = source_profile(function_profile("main", {(0, 0): 5, (1, 0): 2}, head=2))

    merged = merge(a, b)
    main = merged.functions["main"]

    assert main.body == {(0, 0): 15, (1, 0): 2}
    assert main.total_count == 17
    assert main.head_count == 3
    assert a.functions["main"].body == {(0, 0): 10}


def test_merge_disjoint_and_nested():
    hot = function_profile("hot", {(2, 1): 4})
    a = source_profile(function_profile("main", {}, inlined={(10, 0, "hot"): hot}))
    b = source_profile(
        function_profile("main", {(1, 0): 1}, inlined={(10, 0, "hot"): hot}),
        function_profile("other", {(1, 0): 9}),
    )

    merged = merge(a, b)

    assert merged.functions["main"].inlined[(10, 0, "hot")].body == {(2, 1): 8}
    assert merged.functions["main"].total_count == 9
    assert merged.functions["other"].total_count == 9
    assert check_totals(merged) == []


def test_merge_empty_identity():
    profile = source_profile(function_profile("main", {(0, 0): 10, (2, 1): 20}, head=2))

    assert emit_profile(merge(profile, SourceProfile())) == PROFILE_TEXT
    assert emit_profile(merge(SourceProfile(), profile)) == PROFILE_TEXT


def test_merge_saturates():
    a = source_profile(function_profile("main", {(0, 0): U64_MAX}))
    b = source_profile(function_profile("main", {(0, 0): 1}))

    merged = merge(a, b)

    assert merged.functions["main"].body == {(0, 0): U64_MAX}
    assert merged.stats.saturated >= 1


def test_merge_algebra():
    rng = random.Random(17)
    for _ in range(100):
        a, b, c = random_profile(rng), random_profile(rng), random_profile(rng)

        assert emit_profile(merge(a, b)) == emit_profile(merge(b, a))
        assert emit_profile(merge(merge(a, b), c)) == emit_profile(merge(a, merge(b, c)))
        assert emit_profile(merge(a, SourceProfile())) == emit_profile(a)
        assert check_totals(merge(a, b)) == []


def test_check_totals_reports_nested_paths():
    hot = function_profile("hot", {(2, 1): 4})
    profile = source_profile(function_profile("main", {(0, 0): 1}, inlined={(3, 0, "hot"): hot}))
    hot.total_count = 5

    assert check_totals(profile) == ["main: total 5 != 6", "main/3.0:hot: total 5 != 4"]


def test_summarize_empty():
    summary = summarize(SourceProfile())

    assert summary.function_count == 0
    assert summary.total_samples == 0
    assert summary.hottest == []
    assert "functions: 0" in summary.as_lines()


def test_summarize_orders_hottest():
    profile = source_profile(
        function_profile("f10", {(0, 0): 10}),
        function_profile("f30", {(0, 0): 30}, head=2),
        function_profile("b10", {(1, 0): 10}),
    )
    summary = summarize(profile)

    assert summary.hottest == [("f30", 30), ("b10", 10), ("f10", 10)]
    assert summary.total_samples == 50
    assert summary.head_samples == 2
    assert summarize(profile, top=1).hottest == [("f30", 30)]


def test_prune_cold():
    profile = source_profile(
        function_profile("cold", {(0, 0): 2}),
        function_profile("warm", {(0, 0): 5}),
    )
    pruned = prune_cold(profile, 5)

    assert list(pruned.functions) == ["warm"]
    assert len(profile) == 2


def test_scaling_samples_scales_profile():
    program = gen_program(5, 8)
    trace = run_trace(program, 6)
    samples = sample_cycles(trace, 2)
    scale = 3
    scaled = pc_samples(*((address, count * scale) for address, count in samples.pc_samples))

    base = convert_session(samples, program.binary)
    bigger = convert_session(scaled, program.binary)

    for name, function in bigger.functions.items():
        expected = flatten(base.functions[name]) if name in base.functions else {}
        for key, count in flatten(function).items():
            assert 2 * abs(count - scale * expected.get(key, 0)) <= scale + 1
