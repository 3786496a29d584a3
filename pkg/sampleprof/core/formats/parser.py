"""Sidecar files parser."""

from __future__ import annotations

import logging
import re
from collections.abc import Iterable, Iterator
from collections import deque

import voluptuous as vol

from ..helpers import U64_MAX
from .const import (
    ATTR_ADDR,
    ATTR_BFD,
    ATTR_COUNT,
    ATTR_ENTRY,
    ATTR_EXIT,
    ATTR_FILE,
    ATTR_ID,
    ATTR_LINE,
    ATTR_LOC,
    ATTR_NAME,
    ATTR_RANGE,
    ATTR_STMTS,
    COMMENT_PREFIX,
    INDENT,
    MAX_LBR_DEPTH,
    BinaryDescription,
    BlockDesc,
    BranchStack,
    Cfg,
    CfgBlock,
    Frame,
    FunctionDesc,
    FunctionProfile,
    InlineOrigin,
    InstructionDesc,
    Records,
    SampleMode,
    SampleSet,
    SourceProfile,
)
from .logger import ContextualLogger

_LOGGER = logging.getLogger(__name__)

TextInput = str | bytes | Iterable[str]

_HEX_RE = re.compile(r"0x[0-9a-fA-F]{1,16}")
_DEC_RE = re.compile(r"[0-9]{1,20}")
_KEY_RE = re.compile(r"([0-9]{1,20})\.([0-9]{1,20})")


class ParseError(Exception):
    """Specific Exception caused by malformed input."""

    def __init__(self, message: str, lineno=None, text: str = "", source="<input>"):
        super().__init__(message)
        self.message = message
        self.lineno = lineno
        self.text = text
        self.source = source

    def __str__(self) -> str:
        where = f"{self.source}:{self.lineno}" if self.lineno else self.source
        if self.text:
            return f"{where}: {self.message}: {self.text!r}"
        return f"{where}: {self.message}"


class ValidationError(ParseError):
    """Input that parses but violates a structural invariant."""


###############################
#          Validators         #
###############################
def hex_address(value) -> int:
    """Validate a 0x-prefixed 64-bit hexadecimal address."""
    if not isinstance(value, str) or not _HEX_RE.fullmatch(value):
        raise vol.Invalid(f"expected 0x-prefixed 64-bit address, got {value!r}")
    return int(value, 16)


def u64(value) -> int:
    """Validate an unsigned 64-bit decimal count."""
    if isinstance(value, str) and value.startswith("-"):
        raise vol.Invalid(f"negative count {value}")
    if not isinstance(value, str) or not _DEC_RE.fullmatch(value):
        raise vol.Invalid(f"expected unsigned decimal, got {value!r}")
    number = int(value)
    if number > U64_MAX:
        raise vol.Invalid(f"{value} does not fit in 64 bits")
    return number


positive = vol.All(u64, vol.Range(min=1))
symbol = vol.All(str, vol.Length(min=1))


def address_range(value) -> tuple[int, int]:
    """Validate `<0xlo>-<0xhi>` with lo < hi."""
    low, sep, high = str(value).partition("-")
    if not sep:
        raise vol.Invalid(f"expected <0xlo>-<0xhi>, got {value!r}")
    low, high = hex_address(low), hex_address(high)
    if low >= high:
        raise vol.Invalid(f"empty address range {value}")
    return low, high


def source_key(value) -> tuple[int, int]:
    """Validate `<offset>.<discriminator>`."""
    if not isinstance(value, str) or not (match := _KEY_RE.fullmatch(value)):
        raise vol.Invalid(f"expected <offset>.<discriminator>, got {value!r}")
    return int(match.group(1)), int(match.group(2))


def statements(value) -> tuple[tuple[int, int], ...]:
    """Validate a comma separated list of source keys (may be empty)."""
    if value == "":
        return ()
    return tuple(source_key(item) for item in str(value).split(","))


def frame(value: str) -> Frame:
    """Validate `<bfd>:<file>:<line>.<disc>`; the debug name may hold colons."""
    rest, sep, line_disc = value.rpartition(":")
    function, sep2, file = rest.rpartition(":")
    if not sep or not sep2 or not function or not file:
        raise vol.Invalid(f"expected <bfd>:<file>:<line>.<disc>, got {value!r}")
    line, disc = source_key(line_disc)
    if line < 1:
        raise vol.Invalid(f"line must be positive in frame {value!r}")
    return Frame(function, file, line, disc)


def inline_stack(value) -> tuple[Frame, ...]:
    """Validate a leaf-first `;` separated list of frames."""
    frames = tuple(frame(item) for item in str(value).split(";"))
    if not frames:
        raise vol.Invalid("empty inline stack")
    return frames


def node_id(value) -> int:
    return u64(value)


SAMPLE_HEADER_SCHEMA = vol.Schema(
    {
        vol.Required(Records.HEADER_MODE): vol.Coerce(SampleMode),
        vol.Required(Records.HEADER_EVENT): vol.Match(r"^\S+$"),
        vol.Required(Records.HEADER_PERIOD): positive,
    }
)

FUNC_SCHEMA = vol.Schema(
    {
        vol.Required(ATTR_NAME): symbol,
        vol.Required(ATTR_BFD): symbol,
        vol.Required(ATTR_FILE): symbol,
        vol.Required(ATTR_LINE): positive,
        vol.Required(ATTR_RANGE): address_range,
    }
)

BLOCK_SCHEMA = vol.Schema({vol.Required(ATTR_RANGE): address_range})

INSN_SCHEMA = vol.Schema(
    {
        vol.Required(ATTR_ADDR): hex_address,
        vol.Required(ATTR_LOC): inline_stack,
        vol.Optional(Records.BRANCH_FLAG, default=False): bool,
    }
)

INLINE_SCHEMA = vol.Schema(
    {
        vol.Required(ATTR_BFD): symbol,
        vol.Required(ATTR_FILE): symbol,
        vol.Required(ATTR_LINE): positive,
    }
)

CFG_SCHEMA = vol.Schema(
    {
        vol.Required(ATTR_NAME): symbol,
        vol.Required(ATTR_LINE): positive,
        vol.Required(ATTR_ENTRY): node_id,
        vol.Required(ATTR_EXIT): node_id,
    }
)

NODE_SCHEMA = vol.Schema(
    {
        vol.Required(ATTR_ID): node_id,
        vol.Optional(ATTR_STMTS, default=()): statements,
        # annotated files carry counts; they are recomputed, not read
        vol.Optional(ATTR_COUNT): u64,
    }
)

EDGE_COUNT_SCHEMA = vol.Schema({vol.Optional(ATTR_COUNT): u64})


def _attributes(tokens: list[str], flags: tuple[str, ...] = ()) -> dict:
    """Split `key=value` tokens; bare tokens are accepted only as flags."""
    attrs = {}
    for token in tokens:
        key, sep, value = token.partition("=")
        if not sep:
            if token not in flags:
                raise vol.Invalid(f"unexpected token {token!r}")
            key, value = token, True
        if key in attrs:
            raise vol.Invalid(f"duplicate attribute {key!r}")
        attrs[key] = value
    return attrs


###############################
#          Reading            #
###############################
def _iter_lines(data: TextInput) -> Iterator[str]:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    if isinstance(data, str):
        yield from data.splitlines()
        return
    for line in data:
        yield line.rstrip("\r\n")


def is_blank(data: TextInput) -> bool:
    """Tell whether an input holds nothing but blank lines and comments."""
    for line in _iter_lines(data):
        stripped = line.strip()
        if stripped and not stripped.startswith(COMMENT_PREFIX):
            return False
    return True


class RecordReader(ContextualLogger):
    """Iterate the meaningful lines of an input with their line numbers."""

    def __init__(self, data: TextInput, source: str, logger=_LOGGER):
        """Initialize a new RecordReader."""
        self.source = source
        self.last_lineno = 0
        self._data = data
        self.set_logger(logger, source)

    def records(self) -> Iterator[tuple[int, str]]:
        """Yield (lineno, line) skipping blank lines and comments."""
        try:
            for lineno, line in enumerate(_iter_lines(self._data), start=1):
                self.last_lineno = lineno
                stripped = line.strip()
                if not stripped or stripped.startswith(COMMENT_PREFIX):
                    continue
                self.set_lineno(lineno)
                yield lineno, line
            self.set_lineno(None)
        except UnicodeDecodeError as ex:
            raise ParseError(f"input is not UTF-8 ({ex})", source=self.source) from ex

    def fail(self, lineno, text, message, exc=ParseError) -> ParseError:
        """Build the error for the offending line."""
        return exc(message, lineno, text.strip(), self.source)

    def validate(self, schema, lineno, text, tokens, flags=()) -> dict:
        """Validate record attributes, reporting failures on the line."""
        try:
            return schema(_attributes(tokens, flags))
        except vol.Invalid as ex:
            raise self.fail(lineno, text, str(ex)) from ex


def _hex(reader: RecordReader, token: str, lineno: int, line: str) -> int:
    if not _HEX_RE.fullmatch(token):
        raise reader.fail(lineno, line, f"bad address {token!r}")
    return int(token, 16)


###############################
#         Sample files        #
###############################
SAMPLE_HEADERS = (Records.HEADER_MODE, Records.HEADER_EVENT, Records.HEADER_PERIOD)


def parse_samples(data: TextInput, source="<samples>", logger=_LOGGER) -> SampleSet:
    """Parse a sample file into a SampleSet."""
    reader = RecordReader(data, source, logger)
    headers: dict[str, str] = {}
    session: SampleSet | None = None

    for lineno, line in reader.records():
        key, sep, value = line.partition(":")
        key = key.strip()
        if sep and key in SAMPLE_HEADERS:
            if session is not None:
                raise reader.fail(lineno, line, "header after sample records")
            if key in headers:
                raise reader.fail(lineno, line, f"duplicate header {key!r}")
            headers[key] = value.strip()
            continue

        if session is None:
            session = _sample_session(reader, headers, lineno, line)

        tokens = line.split()
        tag = tokens[0]
        if tag == Records.SAMPLE:
            if session.mode != SampleMode.CYCLES:
                raise reader.fail(lineno, line, "PC sample record in lbr session")
            if len(tokens) != 3:
                raise reader.fail(lineno, line, "expected 'S <0xaddr> <count>'")
            address = _hex(reader, tokens[1], lineno, line)
            if not _DEC_RE.fullmatch(tokens[2]) or not 0 < int(tokens[2]) <= U64_MAX:
                raise reader.fail(lineno, line, "sample count must be >= 1")
            session.pc_samples.append((address, int(tokens[2])))
        elif tag == Records.BRANCH_STACK:
            if session.mode != SampleMode.LBR:
                raise reader.fail(lineno, line, "branch stack record in cycles session")
            if len(tokens) != 2:
                raise reader.fail(lineno, line, "expected 'L <0xfrom>-><0xto>[,...]'")
            pairs = []
            for pair in tokens[1].split(","):
                src, arrow, dst = pair.partition("->")
                if not arrow:
                    raise reader.fail(lineno, line, f"bad branch pair {pair!r}")
                pairs.append(
                    (_hex(reader, src, lineno, line), _hex(reader, dst, lineno, line))
                )
            if len(pairs) > MAX_LBR_DEPTH:
                raise reader.fail(
                    lineno, line, f"{len(pairs)} pairs exceed LBR depth {MAX_LBR_DEPTH}"
                )
            session.lbr_samples.append(BranchStack(tuple(pairs)))
        else:
            raise reader.fail(lineno, line, f"unknown record {tag!r}")

    if session is None:
        session = _sample_session(reader, headers, reader.last_lineno or 1, "")
    if session.is_empty:
        reader.warning("Sample session holds no samples")
    return session


def _sample_session(reader, headers, lineno, line) -> SampleSet:
    try:
        header = SAMPLE_HEADER_SCHEMA(headers)
    except vol.Invalid as ex:
        raise reader.fail(lineno, line, f"bad sample file header: {ex}") from ex
    return SampleSet(
        header[Records.HEADER_MODE],
        header[Records.HEADER_EVENT],
        header[Records.HEADER_PERIOD],
    )


###############################
#     Binary descriptions     #
###############################
def parse_binary_desc(
    data: TextInput, source="<binary>", logger=_LOGGER
) -> BinaryDescription:
    """Parse and validate a binary description."""
    reader = RecordReader(data, source, logger)
    functions: list[FunctionDesc] = []
    origins: list[InlineOrigin] = []
    declared_at: dict[str, int] = {}
    inline_lines: dict[str, int] = {}
    func: FunctionDesc | None = None
    block: BlockDesc | None = None
    block_lineno = 0

    def close_block():
        if block is not None and not block.instructions:
            raise ValidationError(
                f"block 0x{block.low:x}-0x{block.high:x} of function "
                f"'{func.asm_name}' has no instructions",
                block_lineno,
                source=reader.source,
            )

    for lineno, line in reader.records():
        tag, *tokens = line.split()
        if tag == Records.FUNC:
            attrs = reader.validate(FUNC_SCHEMA, lineno, line, tokens)
            close_block()
            name = attrs[ATTR_NAME]
            if name in declared_at:
                raise reader.fail(
                    lineno,
                    line,
                    f"duplicate function '{name}' (first declared on line "
                    f"{declared_at[name]})",
                    ValidationError,
                )
            declared_at[name] = lineno
            low, high = attrs[ATTR_RANGE]
            func = FunctionDesc(
                name, attrs[ATTR_BFD], attrs[ATTR_FILE], attrs[ATTR_LINE], low, high
            )
            functions.append(func)
            block = None
        elif tag == Records.BLOCK:
            attrs = reader.validate(BLOCK_SCHEMA, lineno, line, tokens)
            if func is None:
                raise reader.fail(lineno, line, "block before any func", ValidationError)
            close_block()
            low, high = attrs[ATTR_RANGE]
            if not (func.low <= low and high <= func.high):
                raise reader.fail(
                    lineno,
                    line,
                    f"block outside function '{func.asm_name}' range",
                    ValidationError,
                )
            if func.blocks and low < func.blocks[-1].high:
                raise reader.fail(
                    lineno,
                    line,
                    f"block overlaps or precedes the previous block of "
                    f"'{func.asm_name}'",
                    ValidationError,
                )
            block = BlockDesc(low, high)
            block_lineno = lineno
            func.blocks.append(block)
        elif tag == Records.INSN:
            attrs = reader.validate(
                INSN_SCHEMA, lineno, line, tokens, flags=(Records.BRANCH_FLAG,)
            )
            address = attrs[ATTR_ADDR]
            if block is None or not block.low <= address < block.high:
                raise reader.fail(
                    lineno,
                    line,
                    f"instruction 0x{address:x} outside any block",
                    ValidationError,
                )
            if block.instructions and address <= block.instructions[-1].address:
                raise reader.fail(
                    lineno,
                    line,
                    f"instruction 0x{address:x} not above the previous one",
                    ValidationError,
                )
            block.instructions.append(
                InstructionDesc(address, attrs[ATTR_LOC], attrs[Records.BRANCH_FLAG])
            )
        elif tag == Records.INLINE:
            attrs = reader.validate(INLINE_SCHEMA, lineno, line, tokens)
            if (seen := inline_lines.get(attrs[ATTR_BFD])) is not None:
                reader.warning(
                    "Inline function %s redeclared, line %s replaces %s",
                    attrs[ATTR_BFD],
                    attrs[ATTR_LINE],
                    seen,
                )
            inline_lines[attrs[ATTR_BFD]] = attrs[ATTR_LINE]
            origins.append(
                InlineOrigin(attrs[ATTR_BFD], attrs[ATTR_FILE], attrs[ATTR_LINE])
            )
        else:
            raise reader.fail(lineno, line, f"unknown record {tag!r}")
    close_block()

    ordered = sorted(functions, key=lambda f: f.low)
    for prev, nxt in zip(ordered, ordered[1:]):
        if prev.high > nxt.low:
            raise ValidationError(
                f"functions '{prev.asm_name}' and '{nxt.asm_name}' overlap",
                max(declared_at[prev.asm_name], declared_at[nxt.asm_name]),
                source=reader.source,
            )

    binary = BinaryDescription(functions, origins)
    reader.debug("Parsed %r", binary)
    return binary


###############################
#       Source profiles       #
###############################
class _OpenProfile:
    """Profile being read, checked when its block ends."""

    def __init__(self, profile, declared_total, lineno, text, parent=None, key=None):
        self.profile = profile
        self.declared_total = declared_total
        self.lineno = lineno
        self.text = text
        self.parent = parent
        self.key = key
        # entry and callee keys read so far, zero counts included
        self.seen: set[tuple] = set()


def _close_profile(reader: RecordReader, entry: _OpenProfile):
    profile = entry.profile
    total = sum(profile.body.values()) + sum(
        callee.total_count for callee in profile.inlined.values()
    )
    if total != entry.declared_total:
        raise reader.fail(
            entry.lineno,
            entry.text,
            f"total {entry.declared_total} of '{profile.bfd_name}' does not match "
            f"its body and callee counts ({total})",
            ValidationError,
        )
    profile.total_count = total
    if entry.parent is not None and total == 0:
        del entry.parent.inlined[entry.key]


def _header_fields(reader, lineno, line, tokens, allowed) -> dict[str, str]:
    fields = {}
    for token in tokens:
        key, sep, value = token.partition(":")
        if not sep or key not in allowed or key in fields:
            raise reader.fail(lineno, line, f"unexpected token {token!r}")
        fields[key] = value
    return fields


def _count(reader, lineno, line, value) -> int:
    try:
        return u64(value)
    except vol.Invalid as ex:
        raise reader.fail(lineno, line, str(ex)) from ex


def parse_profile(data: TextInput, source="<profile>", logger=_LOGGER) -> SourceProfile:
    """Parse the indented profile text."""
    reader = RecordReader(data, source, logger)
    result = SourceProfile()
    stack: list[_OpenProfile] = []

    for lineno, line in reader.records():
        body = line.lstrip(" ")
        indent = len(line) - len(body)
        if "\t" in line[: indent + 1] or indent % len(INDENT):
            raise reader.fail(lineno, line, "indentation must be multiples of 2 spaces")
        depth = indent // len(INDENT)
        if depth > len(stack):
            raise reader.fail(lineno, line, "unexpected indentation")
        while len(stack) > depth:
            _close_profile(reader, stack.pop())

        tokens = body.split()
        if depth == 0:
            name, *rest = tokens
            fields = _header_fields(reader, lineno, line, rest, ("total", "head", "bfd"))
            if "total" not in fields or "head" not in fields:
                raise reader.fail(lineno, line, "expected '<name> total:<n> head:<n>'")
            if name in result.functions:
                raise reader.fail(
                    lineno, line, f"duplicate function '{name}'", ValidationError
                )
            function = FunctionProfile(
                name,
                fields.get("bfd") or name,
                head_count=_count(reader, lineno, line, fields["head"]),
            )
            result.functions[name] = function
            declared = _count(reader, lineno, line, fields["total"])
            stack.append(_OpenProfile(function, declared, lineno, line))
            continue

        open_parent = stack[-1]
        parent = open_parent.profile
        key_text, sep, _ = tokens[0].partition(":")
        if not sep or tokens[0][-1] != ":":
            raise reader.fail(lineno, line, "expected '<offset>.<disc>:'")
        try:
            offset, disc = source_key(key_text)
        except vol.Invalid as ex:
            raise reader.fail(lineno, line, str(ex)) from ex

        if len(tokens) == 2:
            if (offset, disc) in open_parent.seen:
                raise reader.fail(
                    lineno, line, f"duplicate entry {offset}.{disc}", ValidationError
                )
            open_parent.seen.add((offset, disc))
            if count := _count(reader, lineno, line, tokens[1]):
                parent.body[(offset, disc)] = count
        elif len(tokens) == 3:
            callee = tokens[1]
            fields = _header_fields(reader, lineno, line, tokens[2:], ("total",))
            if "total" not in fields:
                raise reader.fail(lineno, line, "expected '<callee> total:<n>'")
            key = (offset, disc, callee)
            if key in open_parent.seen:
                raise reader.fail(
                    lineno,
                    line,
                    f"duplicate callee '{callee}' at {offset}.{disc}",
                    ValidationError,
                )
            open_parent.seen.add(key)
            inlined = FunctionProfile(callee, callee)
            parent.inlined[key] = inlined
            declared = _count(reader, lineno, line, fields["total"])
            stack.append(_OpenProfile(inlined, declared, lineno, line, parent, key))
        else:
            raise reader.fail(lineno, line, "malformed profile line")

    while stack:
        _close_profile(reader, stack.pop())
    return result


###############################
#      CFG descriptions       #
###############################
class _OpenCfg:
    def __init__(self, attrs, lineno, text):
        self.attrs = attrs
        self.lineno = lineno
        self.text = text
        self.blocks: dict[int, CfgBlock] = {}
        self.edges: list[tuple[int, int]] = []


def _close_cfg(reader: RecordReader, entry: _OpenCfg) -> Cfg:
    name = entry.attrs[ATTR_NAME]

    def invalid(message):
        return reader.fail(
            entry.lineno, entry.text, f"cfg '{name}': {message}", ValidationError
        )

    cfg = Cfg(
        name,
        entry.attrs[ATTR_LINE],
        list(entry.blocks.values()),
        entry.edges,
        entry.attrs[ATTR_ENTRY],
        entry.attrs[ATTR_EXIT],
    )
    for node in (cfg.entry, cfg.exit):
        if node not in entry.blocks:
            raise invalid(f"node {node} is not declared")
    for src, dst in cfg.edges:
        if src not in entry.blocks or dst not in entry.blocks:
            raise invalid(f"edge {src}->{dst} references an undeclared node")
    ins, outs = cfg.incidence()
    if ins[cfg.entry]:
        raise invalid(f"entry node {cfg.entry} has predecessors")
    if outs[cfg.exit]:
        raise invalid(f"exit node {cfg.exit} has successors")

    seen = {cfg.entry}
    queue = deque([cfg.entry])
    while queue:
        node = queue.popleft()
        for index in outs[node]:
            if (dst := cfg.edges[index][1]) not in seen:
                seen.add(dst)
                queue.append(dst)
    if unreachable := sorted(set(entry.blocks) - seen):
        raise invalid(f"nodes {unreachable} unreachable from entry")
    return cfg


def parse_cfgs(data: TextInput, source="<cfg>", logger=_LOGGER) -> list[Cfg]:
    """Parse one or more CFG descriptions."""
    reader = RecordReader(data, source, logger)
    cfgs: list[Cfg] = []
    names: set[str] = set()
    current: _OpenCfg | None = None

    for lineno, line in reader.records():
        tag, *tokens = line.split()
        if tag == Records.CFG:
            attrs = reader.validate(CFG_SCHEMA, lineno, line, tokens)
            if current is not None:
                cfgs.append(_close_cfg(reader, current))
            if attrs[ATTR_NAME] in names:
                raise reader.fail(
                    lineno,
                    line,
                    f"duplicate cfg '{attrs[ATTR_NAME]}'",
                    ValidationError,
                )
            names.add(attrs[ATTR_NAME])
            current = _OpenCfg(attrs, lineno, line)
            continue
        if tag.startswith(Records.UNRESOLVED + "="):
            continue
        if current is None:
            raise reader.fail(lineno, line, f"{tag!r} record before any cfg")
        if tag == Records.NODE:
            attrs = reader.validate(NODE_SCHEMA, lineno, line, tokens)
            if attrs[ATTR_ID] in current.blocks:
                raise reader.fail(
                    lineno, line, f"duplicate node {attrs[ATTR_ID]}", ValidationError
                )
            current.blocks[attrs[ATTR_ID]] = CfgBlock(attrs[ATTR_ID], attrs[ATTR_STMTS])
        elif tag == Records.EDGE:
            if not tokens:
                raise reader.fail(lineno, line, "expected 'edge <id>-><id>'")
            src, arrow, dst = tokens[0].partition("->")
            try:
                edge = (node_id(src), node_id(dst))
            except vol.Invalid as ex:
                raise reader.fail(lineno, line, f"bad edge: {ex}") from ex
            if not arrow:
                raise reader.fail(lineno, line, "expected 'edge <id>-><id>'")
            reader.validate(EDGE_COUNT_SCHEMA, lineno, line, tokens[1:])
            current.edges.append(edge)
        else:
            raise reader.fail(lineno, line, f"unknown record {tag!r}")

    if current is not None:
        cfgs.append(_close_cfg(reader, current))
    return cfgs
