"""Command line driver for the sampleprof pipeline."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from functools import reduce

import voluptuous as vol

from . import __version__, convert_session
from .annotate import annotate_cfg
from .attribution import ModeError
from .const import (
    CMD_ANNOTATE,
    CMD_CONVERT,
    CMD_MERGE,
    CMD_SIMULATE,
    CMD_SUMMARY,
    CONF_BINARY,
    CONF_CFG,
    CONF_COMMAND,
    CONF_DEPTH,
    CONF_FUNCTIONS,
    CONF_JITTER,
    CONF_MAX_INSNS,
    CONF_MIN_TOTAL,
    CONF_MODE,
    CONF_NO_LOOPS,
    CONF_OUT,
    CONF_PERIOD,
    CONF_PROFILE,
    CONF_PROFILES,
    CONF_SAMPLES,
    CONF_SEED,
    CONF_SIZE,
    CONF_TOP,
    CONF_VERBOSE,
    DEFAULT_DEPTH,
    DEFAULT_FUNCTIONS,
    DEFAULT_JITTER,
    DEFAULT_MAX_INSNS,
    DEFAULT_MIN_TOTAL,
    DEFAULT_MODE,
    DEFAULT_SEED,
    DEFAULT_SIZE,
    DEFAULT_TOP,
    PROG_NAME,
    RunConfig,
)
from .core.formats import (
    MAX_LBR_DEPTH,
    ParseError,
    SampleMode,
    SourceProfile,
    emit_annotated_cfgs,
    emit_profile,
    is_blank,
    parse_binary_desc,
    parse_cfgs,
    parse_profile,
    parse_samples,
)
from .core.helpers import atomic_write, read_text
from .profile import merge, prune_cold, summarize
from .simulate import SimulationError, simulate_session, write_session

_LOGGER = logging.getLogger(__name__)


###############################
#     Run configuration       #
###############################
def existing_file(value):
    """Validate that an input file exists."""
    if not isinstance(value, str) or not os.path.isfile(value):
        raise vol.Invalid(f"no such file: {value}")
    return value


count = vol.All(vol.Coerce(int), vol.Range(min=0))
positive = vol.All(vol.Coerce(int), vol.Range(min=1))

BASE_SCHEMA = vol.Schema(
    {vol.Optional(CONF_VERBOSE, default=False): bool}, extra=vol.REMOVE_EXTRA
)

SCHEMAS = {
    CMD_CONVERT: BASE_SCHEMA.extend(
        {
            vol.Required(CONF_COMMAND): CMD_CONVERT,
            vol.Required(CONF_SAMPLES): existing_file,
            vol.Required(CONF_BINARY): existing_file,
            vol.Required(CONF_OUT): str,
            vol.Optional(CONF_MODE): vol.Coerce(SampleMode),
            vol.Optional(CONF_MIN_TOTAL, default=DEFAULT_MIN_TOTAL): count,
            vol.Optional(CONF_TOP, default=DEFAULT_TOP): count,
        }
    ),
    CMD_MERGE: BASE_SCHEMA.extend(
        {
            vol.Required(CONF_COMMAND): CMD_MERGE,
            vol.Required(CONF_PROFILES): vol.All([existing_file], vol.Length(min=1)),
            vol.Required(CONF_OUT): str,
            vol.Optional(CONF_TOP, default=DEFAULT_TOP): count,
        }
    ),
    CMD_ANNOTATE: BASE_SCHEMA.extend(
        {
            vol.Required(CONF_COMMAND): CMD_ANNOTATE,
            vol.Required(CONF_CFG): existing_file,
            vol.Required(CONF_PROFILE): existing_file,
            vol.Required(CONF_OUT): str,
        }
    ),
    CMD_SIMULATE: BASE_SCHEMA.extend(
        {
            vol.Required(CONF_COMMAND): CMD_SIMULATE,
            vol.Required(CONF_OUT): str,
            vol.Optional(CONF_SEED, default=DEFAULT_SEED): count,
            vol.Optional(CONF_SIZE, default=DEFAULT_SIZE): positive,
            vol.Optional(CONF_FUNCTIONS, default=DEFAULT_FUNCTIONS): positive,
            vol.Optional(CONF_MODE, default=DEFAULT_MODE): vol.Coerce(SampleMode),
            vol.Optional(CONF_PERIOD): positive,
            vol.Optional(CONF_JITTER, default=DEFAULT_JITTER): vol.All(
                vol.Coerce(float), vol.Range(min=0, max=1, max_included=False)
            ),
            vol.Optional(CONF_DEPTH, default=DEFAULT_DEPTH): vol.All(
                vol.Coerce(int), vol.Range(min=1, max=MAX_LBR_DEPTH)
            ),
            vol.Optional(CONF_MAX_INSNS, default=DEFAULT_MAX_INSNS): positive,
            vol.Optional(CONF_NO_LOOPS, default=False): bool,
        }
    ),
    CMD_SUMMARY: BASE_SCHEMA.extend(
        {
            vol.Required(CONF_COMMAND): CMD_SUMMARY,
            vol.Required(CONF_PROFILE): existing_file,
            vol.Optional(CONF_TOP, default=DEFAULT_TOP): count,
        }
    ),
}


def _print(lines) -> None:
    for line in lines:
        print(line)


###############################
#          Commands           #
###############################
def cmd_convert(config: RunConfig) -> int:
    """Convert a sample file against a binary description into a profile."""
    binary = parse_binary_desc(read_text(config.binary), config.binary)
    text = read_text(config.samples)
    if is_blank(text):
        _LOGGER.warning("%s holds no samples, writing an empty profile", config.samples)
        profile = SourceProfile()
    else:
        samples = parse_samples(text, config.samples)
        if config.mode is not None and samples.mode != config.mode:
            raise ModeError(
                f"{config.samples}: expected a {config.mode} session, "
                f"got {samples.mode}"
            )
        profile = convert_session(samples, binary)
    if config.min_total:
        profile = prune_cold(profile, config.min_total)

    atomic_write(config.out, emit_profile(profile))
    _print(summarize(profile, config.top).as_lines())
    return 0


def cmd_merge(config: RunConfig) -> int:
    """Merge profiles left to right."""
    profiles = [parse_profile(read_text(path), path) for path in config.profiles]
    merged = reduce(merge, profiles)
    atomic_write(config.out, emit_profile(merged))
    _print(summarize(merged, config.top).as_lines())
    return 0


def cmd_annotate(config: RunConfig) -> int:
    """Annotate every CFG of a file with block and edge counts."""
    cfgs = parse_cfgs(read_text(config.cfg), config.cfg)
    profile = parse_profile(read_text(config.profile), config.profile)
    annotated = [(cfg, annotate_cfg(cfg, profile)) for cfg in cfgs]
    atomic_write(config.out, emit_annotated_cfgs(annotated))
    for cfg, edges in annotated:
        print(f"{cfg.asm_name}: unresolved={edges.unresolved} clamped={edges.clamped}")
    return 0


def cmd_simulate(config: RunConfig) -> int:
    """Generate a program, run it, sample it and write everything."""
    mode = config.mode or SampleMode.LBR
    session = simulate_session(
        config.seed,
        config.size,
        mode,
        config.sampling_period,
        functions=config.functions,
        jitter=config.jitter,
        depth=config.depth,
        max_insns=config.max_insns,
        loops=config.loops,
    )
    write_session(config.out, session)
    print(f"instructions: {len(session.trace.addresses)}")
    print(f"branches: {len(session.trace.branches)}")
    print(f"samples: {session.samples.total_samples}")
    return 0


def cmd_summary(config: RunConfig) -> int:
    """Print the summary of a profile."""
    profile = parse_profile(read_text(config.profile), config.profile)
    _print(summarize(profile, config.top).as_lines())
    return 0


COMMANDS = {
    CMD_CONVERT: cmd_convert,
    CMD_MERGE: cmd_merge,
    CMD_ANNOTATE: cmd_annotate,
    CMD_SIMULATE: cmd_simulate,
    CMD_SUMMARY: cmd_summary,
}


###############################
#           Parser            #
###############################
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG_NAME, description="Hardware sample profiles for PGO."
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    # also accepted after the command, without resetting a leading -v
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-v", "--verbose", action="store_true", default=argparse.SUPPRESS
    )
    sub = parser.add_subparsers(dest=CONF_COMMAND, required=True)
    modes = [str(mode) for mode in SampleMode]

    convert = sub.add_parser(
        CMD_CONVERT, parents=[common], help="samples + binary -> profile"
    )
    convert.add_argument(CONF_SAMPLES)
    convert.add_argument(CONF_BINARY)
    convert.add_argument("--out", required=True)
    convert.add_argument("--mode", choices=modes, help="expected session mode")
    convert.add_argument(
        "--min-total", dest=CONF_MIN_TOTAL, type=int, help="drop colder functions"
    )
    convert.add_argument("--top", type=int, help="hottest functions to list")

    merge_cmd = sub.add_parser(CMD_MERGE, parents=[common], help="merge profiles")
    merge_cmd.add_argument(CONF_PROFILES, nargs="+")
    merge_cmd.add_argument("--out", required=True)
    merge_cmd.add_argument("--top", type=int)

    annotate = sub.add_parser(
        CMD_ANNOTATE, parents=[common], help="apply a profile to CFGs"
    )
    annotate.add_argument(CONF_CFG)
    annotate.add_argument(CONF_PROFILE)
    annotate.add_argument("--out", required=True)

    simulate = sub.add_parser(
        CMD_SIMULATE, parents=[common], help="write a synthetic session"
    )
    simulate.add_argument("--out", required=True, help="output directory")
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--size", type=int, help="blocks of main")
    simulate.add_argument("--functions", type=int)
    simulate.add_argument("--mode", choices=modes)
    simulate.add_argument("--period", type=int)
    simulate.add_argument("--jitter", type=float)
    simulate.add_argument("--depth", type=int)
    simulate.add_argument("--max-insns", dest=CONF_MAX_INSNS, type=int)
    simulate.add_argument("--no-loops", dest=CONF_NO_LOOPS, action="store_true")

    summary = sub.add_parser(
        CMD_SUMMARY, parents=[common], help="print a profile summary"
    )
    summary.add_argument(CONF_PROFILE)
    summary.add_argument("--top", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Run one command; 0 only when its output was written completely."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )

    options = {key: value for key, value in vars(args).items() if value is not None}
    try:
        config = RunConfig(SCHEMAS[args.command](options))
    except vol.Invalid as ex:
        parser.error(f"{args.command}: {ex}")

    try:
        return COMMANDS[config.command](config)
    except (ParseError, ModeError, SimulationError, OSError) as ex:
        _LOGGER.error("%s failed: %s", config.command, ex)
        return 1
