"""bfmconvert: MAT-format Basel face-model assets -> MFM1 binary.

The converter transforms locally licensed Basel 2009 files; it never
ships or redistributes the asset itself.  Output follows the normative
MFM1 byte layout: magic ``MFM1``, eight little-endian uint32 header
words (V, T, K_id, K_exp, K_tex, L, 0, 0), then little-endian float32
payload arrays with basis matrices stored column by column.
"""

from .convert import (ConversionError, ConversionManifest, ConversionReport,
                      IndexRangeError, MissingFieldError, convert)
from .mfm import write_mfm, validate_arrays

__version__ = "0.1.0"
