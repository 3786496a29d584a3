"""Line-oriented sidecar formats: samples, binary descriptions, profiles, CFGs."""

from .const import (  # noqa: F401
    MAX_LBR_DEPTH,
    BinaryDescription,
    BlockDesc,
    BlockProfile,
    BranchStack,
    Cfg,
    CfgBlock,
    EdgeProfile,
    Frame,
    FunctionDesc,
    FunctionProfile,
    InlineOrigin,
    InlineStack,
    InstructionDesc,
    ProfileStats,
    SampleMode,
    SampleSet,
    SourceProfile,
)
from .emitter import (  # noqa: F401
    emit_annotated_cfgs,
    emit_binary_desc,
    emit_cfgs,
    emit_ground_truth,
    emit_profile,
    emit_samples,
)
from .parser import (  # noqa: F401
    ParseError,
    ValidationError,
    is_blank,
    parse_binary_desc,
    parse_cfgs,
    parse_profile,
    parse_samples,
)
