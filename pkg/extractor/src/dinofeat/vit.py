"""Minimal vision transformer matching the self-distilled small checkpoints.

Parameter names line up with the published state dicts (patch_embed.proj,
blocks.N.attn.qkv, ...) so they load directly. Only the pieces needed for
patch-feature extraction are implemented: there is no classification head.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn


@dataclass(frozen=True)
class VitSpec:
    name: str
    patch_size: int
    embed_dim: int
    depth: int
    num_heads: int
    mlp_ratio: int = 4
    image_size: int = 224

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size


VARIANTS = {
    "dino_vits8": VitSpec("dino_vits8", patch_size=8, embed_dim=384, depth=12, num_heads=6),
    "dino_vits16": VitSpec("dino_vits16", patch_size=16, embed_dim=384, depth=12, num_heads=6),
}

# Published checkpoint locations (downloaded on first use).
CHECKPOINT_URLS = {
    "dino_vits8": "https://dl.fbaipublicfiles.com/dino/dino_deitsmall8_pretrain/dino_deitsmall8_pretrain.pth",
    "dino_vits16": "https://dl.fbaipublicfiles.com/dino/dino_deitsmall16_pretrain/dino_deitsmall16_pretrain.pth",
}

ATTENTION_LAYERS = ("key", "query", "value", "output")


class Attention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim**-0.5
        self.qkv = nn.Linear(dim, dim * 3, bias=True)
        self.proj = nn.Linear(dim, dim)

    def split_qkv(self, x: torch.Tensor):
        """(B, N, dim) -> q, k, v each (B, heads, N, head_dim)."""
        b, n, dim = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, self.head_dim)
        qkv = qkv.permute(2, 0, 3, 1, 4)
        return qkv[0], qkv[1], qkv[2]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, dim = x.shape
        q, k, v = self.split_qkv(x)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, dim)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    def __init__(self, dim: int, num_heads: int, mlp_ratio: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=1e-6)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim, eps=1e-6)
        self.mlp = Mlp(dim, dim * mlp_ratio)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        return x


class VisionTransformer(nn.Module):
    def __init__(self, spec: VitSpec):
        super().__init__()
        self.spec = spec
        num_patches = spec.grid * spec.grid
        self.cls_token = nn.Parameter(torch.zeros(1, 1, spec.embed_dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, num_patches + 1, spec.embed_dim))
        self.patch_embed = nn.ModuleDict(
            {"proj": nn.Conv2d(3, spec.embed_dim, kernel_size=spec.patch_size,
                               stride=spec.patch_size)}
        )
        self.blocks = nn.ModuleList(
            [Block(spec.embed_dim, spec.num_heads, spec.mlp_ratio)
             for _ in range(spec.depth)]
        )
        self.norm = nn.LayerNorm(spec.embed_dim, eps=1e-6)

    def _embed(self, pixels: torch.Tensor) -> torch.Tensor:
        b = pixels.shape[0]
        x = self.patch_embed["proj"](pixels)          # (B, dim, gh, gw)
        x = x.flatten(2).transpose(1, 2)              # (B, gh*gw, dim)
        cls = self.cls_token.expand(b, -1, -1)
        x = torch.cat([cls, x], dim=1)
        return x + self.pos_embed

    @torch.no_grad()
    def patch_features(self, pixels: torch.Tensor, layer: str = "key") -> torch.Tensor:
        """Per-patch features from the final block, class token dropped.

        ``layer`` selects the key/query/value projection of the final
        attention block, or "output" for the final normalized tokens.
        Returns (B, grid*grid, embed_dim).
        """
        if layer not in ATTENTION_LAYERS:
            raise ValueError(f"layer must be one of {ATTENTION_LAYERS}")
        self.eval()
        x = self._embed(pixels)
        for block in self.blocks[:-1]:
            x = block(x)
        final = self.blocks[-1]
        if layer == "output":
            tokens = self.norm(final(x))
            return tokens[:, 1:, :]
        q, k, v = final.attn.split_qkv(final.norm1(x))
        chosen = {"query": q, "key": k, "value": v}[layer]
        b, heads, n, head_dim = chosen.shape
        merged = chosen.transpose(1, 2).reshape(b, n, heads * head_dim)
        return merged[:, 1:, :]
