"""Encode image datasets with a frozen vision encoder into VMFE files."""
from .encoders import EncoderLoadError, HfVisionEncoder, StubEncoder, get_encoder
from .extract import ExtractorConfig, ExtractResult, extract
from .format import (
    BadMagic,
    FormatError,
    LabelOutOfRange,
    Summary,
    Truncated,
    VersionMismatch,
    read_vmfe,
    summarize,
    write_vmfe,
)

__version__ = "0.1.0"
