"""Apply a source profile to control-flow graphs."""

from __future__ import annotations

import logging
import random

from .core.formats import Cfg, EdgeProfile, SourceProfile
from .core.helpers import round_half_up, saturating_sum

_LOGGER = logging.getLogger(__name__)


def annotate_blocks(cfg: Cfg, profile: SourceProfile) -> dict[int, int]:
    """Block counts from the function's top-level body.

    A block counts the rounded mean of its statements, missing keys count 0.
    An entry block left at 0 in a sampled function gets max(1, head_count)
    so the function is never considered dead.
    """
    function = profile.functions.get(cfg.asm_name)
    if function is None:
        _LOGGER.warning("Function %s absent from profile, annotating zeros", cfg.asm_name)
        return {block.id: 0 for block in cfg.blocks}

    counts = {}
    for block in cfg.blocks:
        if not block.statements:
            counts[block.id] = 0
            continue
        total, _ = saturating_sum(function.body.get(key, 0) for key in block.statements)
        counts[block.id] = round_half_up(total, len(block.statements))

    if function.total_count > 0 and counts[cfg.entry] == 0:
        counts[cfg.entry] = max(1, function.head_count)
        _LOGGER.debug(
            "Entry of %s raised to %s to keep it alive", cfg.asm_name, counts[cfg.entry]
        )
    return counts


def propagate_edges(
    cfg: Cfg, block_counts: dict[int, int], shuffle_seed: int | None = None
) -> EdgeProfile:
    """Infer edge counts from block counts by flow conservation.

    Whenever one side (in or out) of a block has exactly one unknown edge, it
    gets the block count minus the known edges, clamped at 0. Each round
    resolves at least one edge; edges never resolved are reported and set to 0.
    """
    ins, outs = cfg.incidence()
    order = cfg.block_ids()
    if shuffle_seed is not None:
        random.Random(shuffle_seed).shuffle(order)

    known: dict[int, int] = {}
    clamped = 0
    rounds = 0
    progress = True
    while progress:
        progress = False
        for block_id in order:
            for side in (ins[block_id], outs[block_id]):
                unknown = [index for index in side if index not in known]
                if len(unknown) != 1:
                    continue
                rest = sum(known[index] for index in side if index in known)
                value = block_counts.get(block_id, 0) - rest
                if value < 0:
                    clamped += 1
                    _LOGGER.debug(
                        "%s: edge %s->%s inferred %s, clamped to 0",
                        cfg.asm_name,
                        *cfg.edges[unknown[0]],
                        value,
                    )
                    value = 0
                known[unknown[0]] = value
                progress = True
        rounds += progress

    unresolved = frozenset(range(len(cfg.edges))) - known.keys()
    if unresolved:
        _LOGGER.info("%s: %s edges left unresolved", cfg.asm_name, len(unresolved))
    if clamped:
        _LOGGER.warning("%s: %s inconsistent edges clamped to 0", cfg.asm_name, clamped)
    return EdgeProfile(
        block_counts=dict(block_counts),
        edge_counts=[known.get(index, 0) for index in range(len(cfg.edges))],
        unknown=frozenset(unresolved),
        clamped=clamped,
        rounds=rounds,
    )


def annotate_cfg(
    cfg: Cfg, profile: SourceProfile, shuffle_seed: int | None = None
) -> EdgeProfile:
    return propagate_edges(cfg, annotate_blocks(cfg, profile), shuffle_seed)


def flow_violations(cfg: Cfg, edge_profile: EdgeProfile) -> list[int]:
    """Blocks whose resolved edges do not add up to the block count."""
    ins, outs = cfg.incidence()
    violations = []
    for block_id in cfg.block_ids():
        incident = ins[block_id] + outs[block_id]
        if any(index in edge_profile.unknown for index in incident):
            continue
        count = edge_profile.block_counts.get(block_id, 0)
        sides = []
        if block_id != cfg.entry:
            sides.append(ins[block_id])
        if block_id != cfg.exit:
            sides.append(outs[block_id])
        if any(sum(edge_profile.edge_counts[i] for i in side) != count for side in sides):
            violations.append(block_id)
    return violations
