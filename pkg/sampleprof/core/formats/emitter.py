"""Sidecar files emitter.

Every emitter is deterministic: equal inputs give byte-identical text, and
the matching parser reads it back to an equal value.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping

from .const import (
    INDENT,
    BinaryDescription,
    BlockProfile,
    Cfg,
    EdgeProfile,
    FunctionProfile,
    Records,
    SampleMode,
    SampleSet,
    SourceProfile,
)


def _join(lines: list[str]) -> str:
    return "\n".join(lines) + "\n" if lines else ""


def _key(offset: int, disc: int) -> str:
    return f"{offset}.{disc}"


###############################
#       Source profiles       #
###############################
def _emit_body(profile: FunctionProfile, depth: int, lines: list[str]) -> None:
    entries = [
        (offset, disc, 0, "", count)
        for (offset, disc), count in profile.body.items()
        if count
    ]
    entries.extend(
        (offset, disc, 1, name, callee)
        for (offset, disc, name), callee in profile.inlined.items()
        if callee.total_count
    )
    indent = INDENT * depth
    for offset, disc, kind, name, value in sorted(entries, key=lambda e: e[:4]):
        if kind == 0:
            lines.append(f"{indent}{_key(offset, disc)}: {value}")
        else:
            header = f"{indent}{_key(offset, disc)}: {name}"
            lines.append(f"{header} total:{value.total_count}")
            _emit_body(value, depth + 1, lines)


def emit_profile(profile: SourceProfile) -> str:
    """Render a SourceProfile, functions sorted by assembler name."""
    lines: list[str] = []
    for asm_name in sorted(profile.functions):
        function = profile.functions[asm_name]
        header = f"{asm_name} total:{function.total_count} head:{function.head_count}"
        if function.bfd_name != asm_name:
            header += f" bfd:{function.bfd_name}"
        lines.append(header)
        _emit_body(function, 1, lines)
    return _join(lines)


###############################
#         Sample files        #
###############################
def emit_samples(samples: SampleSet) -> str:
    """Render a sampling session."""
    lines = [
        f"{Records.HEADER_MODE}: {samples.mode}",
        f"{Records.HEADER_EVENT}: {samples.event_name}",
        f"{Records.HEADER_PERIOD}: {samples.period}",
    ]
    if samples.mode == SampleMode.CYCLES:
        lines.extend(
            f"{Records.SAMPLE} 0x{address:x} {count}"
            for address, count in samples.pc_samples
        )
    else:
        lines.extend(
            f"{Records.BRANCH_STACK} "
            + ",".join(f"0x{src:x}->0x{dst:x}" for src, dst in stack.pairs)
            for stack in samples.lbr_samples
        )
    return _join(lines)


###############################
#     Binary descriptions     #
###############################
def emit_binary_desc(binary: BinaryDescription) -> str:
    """Render a binary description, inline origins first."""
    lines = [
        f"{Records.INLINE} bfd={origin.bfd_name} file={origin.file} "
        f"line={origin.start_line}"
        for origin in binary.inline_origins
    ]
    for func in binary.functions:
        lines.append(
            f"{Records.FUNC} name={func.asm_name} bfd={func.bfd_name} "
            f"file={func.file} line={func.start_line} "
            f"range=0x{func.low:x}-0x{func.high:x}"
        )
        for block in func.blocks:
            lines.append(f"{Records.BLOCK} range=0x{block.low:x}-0x{block.high:x}")
            for insn in block.instructions:
                loc = ";".join(str(frame) for frame in insn.source_key)
                line = f"{Records.INSN} addr=0x{insn.address:x} loc={loc}"
                if insn.is_branch:
                    line += f" {Records.BRANCH_FLAG}"
                lines.append(line)
    return _join(lines)


###############################
#      CFG descriptions       #
###############################
def _emit_cfg(cfg: Cfg, lines: list[str], edge_profile: EdgeProfile | None = None):
    lines.append(
        f"{Records.CFG} name={cfg.asm_name} line={cfg.start_line} "
        f"entry={cfg.entry} exit={cfg.exit}"
    )
    for block in cfg.blocks:
        stmts = ",".join(_key(offset, disc) for offset, disc in block.statements)
        line = f"{Records.NODE} id={block.id} stmts={stmts}"
        if edge_profile is not None:
            line += f" count={edge_profile.block_counts.get(block.id, 0)}"
        lines.append(line)
    for index, (src, dst) in enumerate(cfg.edges):
        line = f"{Records.EDGE} {src}->{dst}"
        if edge_profile is not None:
            line += f" count={edge_profile.edge_counts[index]}"
        lines.append(line)
    if edge_profile is not None:
        lines.append(f"{Records.UNRESOLVED}={edge_profile.unresolved}")


def emit_cfgs(cfgs: Iterable[Cfg]) -> str:
    """Render CFG descriptions."""
    lines: list[str] = []
    for cfg in cfgs:
        _emit_cfg(cfg, lines)
    return _join(lines)


def emit_annotated_cfgs(annotated: Iterable[tuple[Cfg, EdgeProfile]]) -> str:
    """Render CFGs with node and edge counts and an unresolved trailer each."""
    lines: list[str] = []
    for cfg, edge_profile in annotated:
        _emit_cfg(cfg, lines, edge_profile)
    return _join(lines)


###############################
#         Ground truth        #
###############################
def emit_ground_truth(
    heads: Mapping[str, int],
    blocks: BlockProfile,
    edges: Mapping[tuple[str, int, int], int],
    addresses: Mapping[int, int],
) -> str:
    """Render the oracle tallies of a simulated trace."""
    lines = [f"{Records.HEAD} {name} {count}" for name, count in sorted(heads.items())]
    lines.extend(
        f"{Records.BLOCK} {name} {index} {count}"
        for (name, index), count in sorted(blocks.counts.items())
    )
    lines.extend(
        f"{Records.EDGE} {name} {src}->{dst} {count}"
        for (name, src, dst), count in sorted(edges.items())
    )
    lines.extend(
        f"{Records.ADDR} 0x{address:x} {count}"
        for address, count in sorted(addresses.items())
    )
    return _join(lines)
