"""Toy vision-transformer encoder over non-overlapping image tiles.

The token sequence is [class token; register tokens; patch tokens] with
learned position embeddings added to every slot. Blocks are pre-norm:
x + attention(norm(x)) followed by x + mlp(norm(x)), and a final norm is
applied to the whole sequence. Register tokens take part in attention but
carry no classification signal downstream; callers slice them off.

Defaults are desk scale (dim 32, depth 2) so the whole pipeline trains in
seconds on a CPU; the geometry (224 input, 14 tile) matches the full-scale
configuration, which only changes dim/depth/heads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict

import numpy as np

from .errors import DimensionError, ParameterError
from .tensor import (Tensor, broadcast_to, concat, layer_norm, narrow,
                     reshape, silu, softmax, transpose)

EncoderWeights = Dict[str, Tensor]


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 224
    tile_size: int = 14
    channels: int = 3
    dim: int = 32
    depth: int = 2
    heads: int = 4
    registers: int = 4
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.image_size <= 0 or self.tile_size <= 0:
            raise ParameterError("image_size and tile_size must be positive")
        if self.image_size % self.tile_size != 0:
            raise ParameterError(
                f"tile size {self.tile_size} does not divide "
                f"image size {self.image_size}")
        if self.dim % self.heads != 0:
            raise ParameterError(
                f"heads {self.heads} does not divide dim {self.dim}")
        if self.depth < 0 or self.registers < 0:
            raise ParameterError("depth and registers must be nonnegative")
        if self.mlp_ratio < 1:
            raise ParameterError(f"mlp_ratio must be >= 1, got {self.mlp_ratio}")

    @property
    def tiles_per_side(self) -> int:
        return self.image_size // self.tile_size

    @property
    def n_patches(self) -> int:
        return self.tiles_per_side ** 2

    @property
    def seq_len(self) -> int:
        # 1 class slot + registers + patches
        return 1 + self.registers + self.n_patches

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def patch_dim(self) -> int:
        return self.channels * self.tile_size ** 2


def init_encoder(cfg: EncoderConfig, seed: int = 0,
                 dtype=np.float32) -> EncoderWeights:
    """Fresh weights: Normal(0, 0.02) matrices/embeddings, zero biases,
    unit norm gains."""
    rng = np.random.default_rng(seed)
    d = cfg.dim

    def normal(*shape):
        return Tensor(rng.normal(0.0, 0.02, size=shape).astype(dtype),
                      requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)

    w: EncoderWeights = {
        "patch.w": normal(cfg.patch_dim, d),
        "patch.b": zeros(d),
        "cls": normal(1, d),
        "reg": normal(cfg.registers, d) if cfg.registers else zeros(0, d),
        "pos": normal(cfg.seq_len, d),
    }
    for i in range(cfg.depth):
        p = f"blk{i}"
        w[f"{p}.ln1.g"] = ones(d)
        w[f"{p}.ln1.b"] = zeros(d)
        for name in ("wq", "wk", "wv", "wo"):
            w[f"{p}.attn.{name}"] = normal(d, d)
        for name in ("bq", "bk", "bv", "bo"):
            w[f"{p}.attn.{name}"] = zeros(d)
        w[f"{p}.ln2.g"] = ones(d)
        w[f"{p}.ln2.b"] = zeros(d)
        w[f"{p}.mlp.w1"] = normal(d, cfg.mlp_ratio * d)
        w[f"{p}.mlp.b1"] = zeros(cfg.mlp_ratio * d)
        w[f"{p}.mlp.w2"] = normal(cfg.mlp_ratio * d, d)
        w[f"{p}.mlp.b2"] = zeros(d)
    w["final.g"] = ones(d)
    w["final.b"] = zeros(d)
    return w


def tile_image(image: np.ndarray, tile: int) -> np.ndarray:
    """Cut (B, C, H, W) or (C, H, W) into flat per-tile rows.

    Each row is one tile flattened channel-major: all of channel 0's
    tile pixels, then channel 1's, then channel 2's. Tiles are ordered
    left to right, top to bottom.
    """
    img = np.asarray(image)
    batched = img.ndim == 4
    if not batched:
        if img.ndim != 3:
            raise DimensionError(f"expected 3 or 4 axes, got shape {img.shape}")
        img = img[None]
    b, c, h, wdt = img.shape
    if h % tile or wdt % tile:
        raise DimensionError(
            f"tile {tile} does not divide image {h}x{wdt}")
    ny, nx = h // tile, wdt // tile
    out = (img.reshape(b, c, ny, tile, nx, tile)
              .transpose(0, 2, 4, 1, 3, 5)
              .reshape(b, ny * nx, c * tile * tile))
    return out if batched else out[0]


def untile_image(tiles: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    """Inverse of tile_image for a single (T, patch_dim) block."""
    n = cfg.tiles_per_side
    t = cfg.tile_size
    return (tiles.reshape(n, n, cfg.channels, t, t)
                 .transpose(2, 0, 3, 1, 4)
                 .reshape(cfg.channels, cfg.image_size, cfg.image_size))


def embed(tiles: np.ndarray, w: EncoderWeights, cfg: EncoderConfig) -> Tensor:
    """Project tiles to tokens, prepend class/register slots, add positions."""
    batched = tiles.ndim == 3
    if not batched:
        tiles = tiles[None]
    b, t, p = tiles.shape
    if t != cfg.n_patches or p != cfg.patch_dim:
        raise DimensionError(
            f"tiles {tiles.shape[1:]} do not match config "
            f"({cfg.n_patches}, {cfg.patch_dim})")
    tokens = Tensor(tiles) @ w["patch.w"] + w["patch.b"]
    cls = broadcast_to(reshape(w["cls"], (1, 1, cfg.dim)), (b, 1, cfg.dim))
    parts = [cls]
    if cfg.registers:
        reg = broadcast_to(reshape(w["reg"], (1, cfg.registers, cfg.dim)),
                           (b, cfg.registers, cfg.dim))
        parts.append(reg)
    parts.append(tokens)
    seq = concat(parts, axis=1) + w["pos"]
    return seq if batched else reshape(seq, (cfg.seq_len, cfg.dim))


def _attention(x: Tensor, w: EncoderWeights, p: str, cfg: EncoderConfig) -> Tensor:
    b, n, d = x.shape
    h, dh = cfg.heads, cfg.head_dim

    def heads(t):
        return transpose(reshape(t, (b, n, h, dh)), (0, 2, 1, 3))

    q = heads(x @ w[f"{p}.wq"] + w[f"{p}.bq"])
    k = heads(x @ w[f"{p}.wk"] + w[f"{p}.bk"])
    v = heads(x @ w[f"{p}.wv"] + w[f"{p}.bv"])
    scores = (q @ transpose(k, (0, 1, 3, 2))) / math.sqrt(dh)
    ctx = softmax(scores, axis=-1) @ v
    ctx = reshape(transpose(ctx, (0, 2, 1, 3)), (b, n, d))
    return ctx @ w[f"{p}.wo"] + w[f"{p}.bo"]


def _mlp(x: Tensor, w: EncoderWeights, p: str) -> Tensor:
    return silu(x @ w[f"{p}.w1"] + w[f"{p}.b1"]) @ w[f"{p}.w2"] + w[f"{p}.b2"]


def encode_batch(images: np.ndarray, w: EncoderWeights,
                 cfg: EncoderConfig) -> Tensor:
    """Full encoder pass over (B, C, H, W) images -> (B, seq_len, dim)."""
    images = np.asarray(images)
    if images.ndim != 4:
        raise DimensionError(f"expected (B, C, H, W), got {images.shape}")
    if images.shape[1:] != (cfg.channels, cfg.image_size, cfg.image_size):
        raise DimensionError(
            f"images {images.shape[1:]} do not match config "
            f"({cfg.channels}, {cfg.image_size}, {cfg.image_size})")
    x = embed(tile_image(images, cfg.tile_size), w, cfg)
    for i in range(cfg.depth):
        p = f"blk{i}"
        x = x + _attention(layer_norm(x, w[f"{p}.ln1.g"], w[f"{p}.ln1.b"]),
                           w, f"{p}.attn", cfg)
        x = x + _mlp(layer_norm(x, w[f"{p}.ln2.g"], w[f"{p}.ln2.b"]),
                     w, f"{p}.mlp")
    return layer_norm(x, w["final.g"], w["final.b"])


def encode(image: np.ndarray, w: EncoderWeights, cfg: EncoderConfig) -> Tensor:
    """Single-image pass -> (seq_len, dim)."""
    seq = encode_batch(np.asarray(image)[None], w, cfg)
    return reshape(seq, (cfg.seq_len, cfg.dim))


def split_tokens(seq: Tensor, cfg: EncoderConfig):
    """(class_token, register_tokens, patch_tokens) views of a sequence.

    Works on (seq_len, dim) and (B, seq_len, dim) alike; the class token
    keeps a length-1 sequence axis so shapes stay uniform.
    """
    axis = seq.ndim - 2
    cls = narrow(seq, axis, 0, 1)
    regs = narrow(seq, axis, 1, cfg.registers)
    patches = narrow(seq, axis, 1 + cfg.registers, cfg.n_patches)
    return cls, regs, patches
