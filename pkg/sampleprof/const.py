"""Constants for sampleprof."""

from dataclasses import dataclass
from typing import Any

from .core.formats import MAX_LBR_DEPTH, SampleMode

PROG_NAME = "sampleprof"

# Subcommands
CMD_CONVERT = "convert"
CMD_MERGE = "merge"
CMD_ANNOTATE = "annotate"
CMD_SIMULATE = "simulate"
CMD_SUMMARY = "summary"

# Run configuration
CONF_COMMAND = "command"
CONF_SAMPLES = "samples"
CONF_BINARY = "binary"
CONF_PROFILES = "profiles"
CONF_PROFILE = "profile"
CONF_CFG = "cfg"
CONF_OUT = "out"
CONF_MODE = "mode"
CONF_PERIOD = "period"
CONF_JITTER = "jitter"
CONF_DEPTH = "depth"
CONF_SEED = "seed"
CONF_SIZE = "size"
CONF_FUNCTIONS = "functions"
CONF_MAX_INSNS = "max_insns"
CONF_NO_LOOPS = "no_loops"
CONF_MIN_TOTAL = "min_total"
CONF_TOP = "top"
CONF_VERBOSE = "verbose"

# Defaults
DEFAULT_PERIODS = {SampleMode.CYCLES: 2_000_000, SampleMode.LBR: 400_000}
DEFAULT_MODE = SampleMode.LBR
DEFAULT_DEPTH = MAX_LBR_DEPTH
DEFAULT_JITTER = 0.0
DEFAULT_SEED = 0
DEFAULT_SIZE = 8
DEFAULT_FUNCTIONS = 3
DEFAULT_MAX_INSNS = 100_000
DEFAULT_MIN_TOTAL = 0
DEFAULT_TOP = 10


@dataclass
class RunConfig:
    """Represent the validated configuration of one sampleprof run."""

    run_config: dict[str, Any]

    def __post_init__(self) -> None:
        self.command: str = self.run_config[CONF_COMMAND]
        self.out: str | None = self.run_config.get(CONF_OUT)
        self.samples: str | None = self.run_config.get(CONF_SAMPLES)
        self.binary: str | None = self.run_config.get(CONF_BINARY)
        self.profiles: list[str] = self.run_config.get(CONF_PROFILES, [])
        self.profile: str | None = self.run_config.get(CONF_PROFILE)
        self.cfg: str | None = self.run_config.get(CONF_CFG)
        self.mode: SampleMode | None = self.run_config.get(CONF_MODE)
        self.period: int | None = self.run_config.get(CONF_PERIOD)
        self.jitter: float = self.run_config.get(CONF_JITTER, DEFAULT_JITTER)
        self.depth: int = self.run_config.get(CONF_DEPTH, DEFAULT_DEPTH)
        self.seed: int = self.run_config.get(CONF_SEED, DEFAULT_SEED)
        self.size: int = self.run_config.get(CONF_SIZE, DEFAULT_SIZE)
        self.functions: int = self.run_config.get(CONF_FUNCTIONS, DEFAULT_FUNCTIONS)
        self.max_insns: int = self.run_config.get(CONF_MAX_INSNS, DEFAULT_MAX_INSNS)
        self.loops: bool = not self.run_config.get(CONF_NO_LOOPS, False)
        self.min_total: int = self.run_config.get(CONF_MIN_TOTAL, DEFAULT_MIN_TOTAL)
        self.top: int = self.run_config.get(CONF_TOP, DEFAULT_TOP)
        self.verbose: bool = self.run_config.get(CONF_VERBOSE, False)

    @property
    def sampling_period(self) -> int:
        """The requested period, or the default of the sampling mode."""
        return self.period or DEFAULT_PERIODS[self.mode or DEFAULT_MODE]
