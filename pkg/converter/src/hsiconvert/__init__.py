"""One-shot converter from MAT-format AVIRIS scenes to HSIC/HSIL files."""

from .convert import ConversionError, ConversionJob, convert, verify
from .formats import FormatFailure, read_hsic, read_hsil, write_hsic, write_hsil

__version__ = "0.1.0"

__all__ = [
    "ConversionError",
    "ConversionJob",
    "FormatFailure",
    "convert",
    "read_hsic",
    "read_hsil",
    "verify",
    "write_hsic",
    "write_hsil",
    "__version__",
]
