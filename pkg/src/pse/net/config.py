"""Model hyperparameters and the C{channels}DF{downsample} variant strings."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import ValidationError

_VARIANT_RE = re.compile(r"^C(\d+)DF(\d+)$")


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the enhancement network.

    The frequency axis is downsampled by ``freq_down`` (4 or 8) through
    stride-2 convolutions, processed at width ``channels``, and restored by
    sub-pixel upsampling.  ``n_fft``/``hop`` default to the analysis framing
    used everywhere else in the package but can be shrunk for fast tests.
    """

    channels: int = 48
    freq_down: int = 4
    n_blocks: int = 2
    n_heads: int = 4
    dense_depth: int = 4
    conv_kernel: int = 7
    vad_hidden: int = 128
    n_fft: int = 512
    hop: int = 256

    def __post_init__(self) -> None:
        if self.freq_down not in (4, 8):
            raise ValidationError("freq_down must be 4 or 8")
        if self.channels <= 0 or self.channels % self.n_heads != 0:
            raise ValidationError("channels must be a positive multiple of n_heads")
        if self.n_blocks <= 0 or self.dense_depth <= 0:
            raise ValidationError("n_blocks and dense_depth must be positive")
        if self.n_fft != 2 * self.hop or self.n_fft <= 0:
            raise ValidationError("n_fft must equal 2 * hop")
        if (self.n_fft // 2) % self.freq_down != 0:
            raise ValidationError("n_fft/2 must be divisible by freq_down")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def n_down(self) -> int:
        """Number of stride-2 frequency downsampling stages (2 or 3)."""
        return self.freq_down.bit_length() - 1

    @property
    def f_reduced(self) -> int:
        """Frequency bins after downsampling (bin count stays odd+1 free)."""
        f = self.n_bins
        for _ in range(self.n_down):
            f = (f - 1) // 2 + 1
        return f

    @property
    def variant(self) -> str:
        return format_variant(self.channels, self.freq_down)


def format_variant(channels: int, freq_down: int) -> str:
    return f"C{channels}DF{freq_down}"


def parse_variant(text: str) -> ModelConfig:
    """Parse a variant string like ``C48DF4`` into a :class:`ModelConfig`.

    Raises:
        ValidationError: malformed string or unsupported values.
    """
    m = _VARIANT_RE.match(text.strip())
    if m is None:
        raise ValidationError(
            f"bad variant {text!r}; expected C<channels>DF<4|8>, e.g. C48DF4"
        )
    return ModelConfig(channels=int(m.group(1)), freq_down=int(m.group(2)))
