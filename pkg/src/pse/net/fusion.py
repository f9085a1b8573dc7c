"""Conditioning-modulated Conformer fusion over frequency and time axes.

Each fusion block runs two stages on the (B, C, T, F') latent: first tokens
along frequency with unmasked attention, then tokens along time with causal
attention and causal convolutions.  The audiogram code modulates every stage
through zero-initialized affine parameters, so an untrained stage is exactly
the identity and a zero modulation (gamma = beta = 0, alpha = 1) reduces the
stage to a plain residual Conformer + MLP.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from einops import rearrange
from torch import nn

from .config import ModelConfig

ModulationParams = tuple[torch.Tensor, ...]  # gamma1, beta1, alpha1, gamma2, beta2, alpha2


class ModulationHead(nn.Module):
    """Map the conditioning code to six zero-initialized affine parameters."""

    def __init__(self, dim: int) -> None:
        super().__init__()
        self.proj = nn.Linear(dim, 6 * dim)
        nn.init.zeros_(self.proj.weight)
        nn.init.zeros_(self.proj.bias)

    def forward(self, cond: torch.Tensor) -> ModulationParams:
        return tuple(self.proj(F.silu(cond)).chunk(6, dim=-1))


class SelfAttention(nn.Module):
    """Multi-head self-attention with an optional causal mask."""

    def __init__(self, dim: int, heads: int, causal: bool) -> None:
        super().__init__()
        self.heads = heads
        self.causal = causal
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        q, k, v = rearrange(
            self.qkv(x), "b l (three h d) -> three b h l d", three=3, h=self.heads
        )
        scores = torch.matmul(q, k.transpose(-2, -1)) * self.scale
        if self.causal:
            L = x.shape[1]
            mask = torch.triu(
                torch.ones(L, L, dtype=torch.bool, device=x.device), diagonal=1
            )
            scores = scores.masked_fill(mask, float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = rearrange(torch.matmul(attn, v), "b h l d -> b l (h d)")
        return self.out(out)


def _feed_forward(dim: int, hidden: int) -> nn.Sequential:
    return nn.Sequential(
        nn.LayerNorm(dim), nn.Linear(dim, hidden), nn.SiLU(), nn.Linear(hidden, dim)
    )


class ConvModule(nn.Module):
    """Conformer convolution module on (B, L, C) sequences.

    Pointwise expansion with GLU, a depthwise kernel along the sequence axis
    (left-padded when causal), channelwise layer norm, SiLU, and a pointwise
    projection back.
    """

    def __init__(self, dim: int, kernel: int, causal: bool) -> None:
        super().__init__()
        self.causal = causal
        self.kernel = kernel
        self.pw_in = nn.Conv1d(dim, 2 * dim, 1)
        self.depthwise = nn.Conv1d(dim, dim, kernel, groups=dim)
        self.norm = nn.LayerNorm(dim)
        self.pw_out = nn.Conv1d(dim, dim, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = x.transpose(1, 2)  # (B, C, L)
        h = F.glu(self.pw_in(h), dim=1)
        if self.causal:
            h = F.pad(h, (self.kernel - 1, 0))
        else:
            half = (self.kernel - 1) // 2
            h = F.pad(h, (half, self.kernel - 1 - half))
        h = self.depthwise(h)
        h = self.norm(h.transpose(1, 2)).transpose(1, 2)
        h = self.pw_out(F.silu(h))
        return h.transpose(1, 2)


class ConformerBlock(nn.Module):
    """Pre-norm macaron Conformer: FF/2, attention, conv module, FF/2."""

    def __init__(self, dim: int, heads: int, kernel: int, causal: bool) -> None:
        super().__init__()
        self.ff1 = _feed_forward(dim, 4 * dim)
        self.attn_norm = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, causal)
        self.conv_norm = nn.LayerNorm(dim)
        self.conv = ConvModule(dim, kernel, causal)
        self.ff2 = _feed_forward(dim, 4 * dim)
        self.final_norm = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + 0.5 * self.ff1(x)
        x = x + self.attn(self.attn_norm(x))
        x = x + self.conv(self.conv_norm(x))
        x = x + 0.5 * self.ff2(x)
        return self.final_norm(x)


class FusionStage(nn.Module):
    """One modulated Conformer + MLP stage along the ``freq`` or ``time`` axis."""

    def __init__(self, cfg: ModelConfig, axis: str) -> None:
        super().__init__()
        if axis not in ("freq", "time"):
            raise ValueError("axis must be 'freq' or 'time'")
        self.axis = axis
        causal = axis == "time"
        c = cfg.channels
        self.head = ModulationHead(c)
        self.conformer = ConformerBlock(c, cfg.n_heads, cfg.conv_kernel, causal)
        self.mlp = nn.Sequential(
            nn.LayerNorm(c), nn.Linear(c, 2 * c), nn.GELU(), nn.Linear(2 * c, c)
        )

    def modulate(self, seq: torch.Tensor, params: ModulationParams) -> torch.Tensor:
        """Apply the modulated residual stack to a (N, L, C) token sequence."""
        g1, b1, a1, g2, b2, a2 = params
        h = self.conformer(seq * (1.0 + g1) + b1) * a1 + seq
        return self.mlp(h * (1.0 + g2) + b2) * a2 + h

    def forward(self, z: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        """Args: z (B, C, T, F'); cond (B, F', C).  Returns z-shaped output."""
        B, _, T, Fr = z.shape
        params = self.head(cond)  # each (B, F', C)
        if self.axis == "freq":
            seq = rearrange(z, "b c t f -> (b t) f c")
            params = tuple(
                rearrange(p.unsqueeze(1).expand(B, T, Fr, -1), "b t f c -> (b t) f c")
                for p in params
            )
        else:
            seq = rearrange(z, "b c t f -> (b f) t c")
            params = tuple(rearrange(p, "b f c -> (b f) 1 c") for p in params)
        out = self.modulate(seq, params)
        if self.axis == "freq":
            return rearrange(out, "(b t) f c -> b c t f", b=B)
        return rearrange(out, "(b f) t c -> b c t f", b=B)


class FusionBlock(nn.Module):
    """Frequency stage followed by a causal time stage."""

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.freq_stage = FusionStage(cfg, "freq")
        self.time_stage = FusionStage(cfg, "time")

    def forward(self, z: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        return self.time_stage(self.freq_stage(z, cond), cond)
