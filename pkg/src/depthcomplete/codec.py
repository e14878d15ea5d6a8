"""
Sub-region compression of 30^3 grids.

A grid is cut into a 3x3x3 arrangement of 10^3 blocks. Block (bi, bj, bk),
with bi slowest, holds global voxels (10*bi + li, 10*bj + lj, 10*bk + lk).
One auto-encoder (1000 -> 150 -> 1000) with shared weights codes every block.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ResolutionError
from .neural import (DTYPE, FullyConnected, LayerSpec, LeakyReLU, Network,
                     Sigmoid, fc_forward, init_group, leaky_relu, sigmoid)

GRID = 30
BLOCK = 10
BLOCKS_PER_AXIS = GRID // BLOCK
N_BLOCKS = BLOCKS_PER_AXIS ** 3
BLOCK_VOXELS = BLOCK ** 3
CODE_DIM = 150


def partition(grid: np.ndarray) -> np.ndarray:
    """(30,30,30) -> (27,10,10,10); a leading batch axis is carried through."""
    grid = np.asarray(grid)
    if grid.shape[-3:] != (GRID, GRID, GRID):
        raise ResolutionError(f"partition needs a 30^3 grid, got shape {grid.shape}")
    lead = grid.shape[:-3]
    g = grid.reshape(lead + (3, BLOCK, 3, BLOCK, 3, BLOCK))
    n = len(lead)
    axes = tuple(range(n)) + tuple(n + a for a in (0, 2, 4, 1, 3, 5))
    return g.transpose(axes).reshape(lead + (N_BLOCKS, BLOCK, BLOCK, BLOCK))


def assemble(blocks: np.ndarray) -> np.ndarray:
    """Exact inverse of ``partition``. Accepts (..., 27, 10, 10, 10) or (..., 27, 1000)."""
    blocks = np.asarray(blocks)
    if blocks.ndim >= 2 and blocks.shape[-2:] == (N_BLOCKS, BLOCK_VOXELS):
        blocks = blocks.reshape(blocks.shape[:-1] + (BLOCK, BLOCK, BLOCK))
    if blocks.ndim < 4 or blocks.shape[-4:] != (N_BLOCKS, BLOCK, BLOCK, BLOCK):
        raise DimensionError(f"assemble needs 27 blocks of 10^3, got shape {blocks.shape}")
    lead = blocks.shape[:-4]
    b = blocks.reshape(lead + (3, 3, 3, BLOCK, BLOCK, BLOCK))
    n = len(lead)
    axes = tuple(range(n)) + tuple(n + a for a in (0, 3, 1, 4, 2, 5))
    return b.transpose(axes).reshape(lead + (GRID, GRID, GRID))


def compression_ratio(code_dim: int = CODE_DIM) -> float:
    """Compressed size over raw size for 27 codes of ``code_dim``."""
    if code_dim < 1:
        raise ValueError("code_dim must be >= 1")
    return N_BLOCKS * code_dim / (GRID ** 3)


class AutoEncoder:
    """Shared-weight block auto-encoder.

    ``network`` chains encoder, leaky ReLU, decoder and sigmoid so the whole
    thing trains through one reverse pass. The ``decoder`` group is what gets
    stacked on the completion network.
    """

    def __init__(self, encoder, decoder):
        self.encoder = encoder
        self.decoder = decoder
        self.network = Network([
            FullyConnected(LayerSpec.fully_connected(BLOCK_VOXELS, CODE_DIM), encoder),
            LeakyReLU(),
            FullyConnected(LayerSpec.fully_connected(CODE_DIM, BLOCK_VOXELS), decoder),
            Sigmoid(),
        ])

    @classmethod
    def initialize(cls, seed: int = 0, dtype=DTYPE) -> "AutoEncoder":
        rng = np.random.default_rng(seed)
        enc = init_group("encoder", LayerSpec.fully_connected(BLOCK_VOXELS, CODE_DIM), rng, dtype)
        dec = init_group("decoder", LayerSpec.fully_connected(CODE_DIM, BLOCK_VOXELS), rng, dtype)
        return cls(enc, dec)

    @property
    def groups(self):
        return [self.encoder, self.decoder]

    def reconstruct(self, blocks: np.ndarray) -> np.ndarray:
        """Probabilities for (..., 1000) or (..., 10, 10, 10) blocks, same shape out."""
        blocks = np.asarray(blocks)
        x = blocks.reshape(blocks.shape[:-3] + (BLOCK_VOXELS,)) if blocks.shape[-3:] == (BLOCK,) * 3 \
            else blocks
        p = decode_block(encode_block(x, self), self)
        return p.reshape(blocks.shape)


def encode_block(block: np.ndarray, ae: AutoEncoder) -> np.ndarray:
    """leaky_relu(W_enc x + b_enc) for a flattened 1000-voxel block (batch axes allowed)."""
    x = np.asarray(block)
    if x.shape[-3:] == (BLOCK, BLOCK, BLOCK):
        x = x.reshape(x.shape[:-3] + (BLOCK_VOXELS,))
    x = x.astype(ae.encoder.weight.dtype, copy=False)
    return leaky_relu(fc_forward(x, ae.encoder.weight, ae.encoder.bias))


def decode_block(code: np.ndarray, ae: AutoEncoder) -> np.ndarray:
    """sigmoid(W_dec code + b_dec), 1000 probabilities per code."""
    code = np.asarray(code, dtype=ae.decoder.weight.dtype)
    if code.shape[-1] != CODE_DIM:
        raise DimensionError(f"code axis -1 has length {code.shape[-1]}, expected {CODE_DIM}")
    return sigmoid(fc_forward(code, ae.decoder.weight, ae.decoder.bias))
