"""Completion network architectures."""

from __future__ import annotations

import numpy as np

from . import codec
from .codec import AutoEncoder
from .errors import DimensionError
from .neural import (DTYPE, Conv2D, FullyConnected, LayerSpec, LeakyReLU,
                     Network, ParamGroup, Reshape, Sigmoid, init_group)

HIGH_RES = "high_res_stacked"
LOW_RES = "low_res_direct"
AUTOENCODER = "autoencoder"
VARIANTS = (HIGH_RES, LOW_RES, AUTOENCODER)

DEPTH_SIZE = 64
HIDDEN = 480

CONV_SPECS = (
    ("conv1", LayerSpec.conv2d(1, 16, 5, stride=2, padding=2)),
    ("conv2", LayerSpec.conv2d(16, 32, 5, stride=2, padding=2)),
    ("conv3", LayerSpec.conv2d(32, 64, 3, stride=2, padding=1)),
)


def conv_output_dim(depth_size: int = DEPTH_SIZE) -> int:
    h = w = depth_size
    c = 1
    for _, spec in CONV_SPECS:
        h, w = spec.output_hw(h, w)
        c = spec.out_channels
    return c * h * w


def layer_plan(variant: str, depth_size: int = DEPTH_SIZE) -> list[tuple[str | None, LayerSpec]]:
    """Ordered (group name, spec) pairs; activations carry no name."""
    flat = conv_output_dim(depth_size)
    plan = []
    for name, spec in CONV_SPECS:
        plan += [(name, spec), (None, LayerSpec.leaky_relu())]
    plan += [("fc1", LayerSpec.fully_connected(flat, HIDDEN)), (None, LayerSpec.leaky_relu())]
    if variant == HIGH_RES:
        plan += [("fc2", LayerSpec.fully_connected(HIDDEN, codec.N_BLOCKS * codec.CODE_DIM)),
                 (None, LayerSpec.leaky_relu()),
                 ("decoder", LayerSpec.fully_connected(codec.CODE_DIM, codec.BLOCK_VOXELS)),
                 (None, LayerSpec.sigmoid())]
    elif variant == LOW_RES:
        plan += [("fc_out", LayerSpec.fully_connected(HIDDEN, 1000)),
                 (None, LayerSpec.sigmoid())]
    else:
        raise ValueError(f"unknown model variant {variant!r}")
    return plan


class CompletionModel:
    """Depth map in, occupancy probabilities out.

    The high-resolution variant emits block-ordered probabilities of shape
    (N, 27, 1000), the low-resolution one (N, 1000); ``predict`` turns either
    into (N, R, R, R) grids.
    """

    def __init__(self, variant: str, groups: dict[str, ParamGroup], depth_size: int = DEPTH_SIZE,
                 epoch: int = 0, seed: int = 0):
        self.variant = variant
        self.depth_size = depth_size
        self.epoch = epoch
        self.seed = seed
        layers = []
        for name, spec in layer_plan(variant, depth_size):
            if spec.kind == "conv2d":
                layers.append(Conv2D(spec, groups[name]))
            elif spec.kind == "fully_connected":
                if name == "fc1":
                    layers.append(Reshape((spec.in_dim,)))
                if name == "decoder":
                    layers.append(Reshape((codec.N_BLOCKS, codec.CODE_DIM)))
                layers.append(FullyConnected(spec, groups[name]))
            elif spec.kind == "leaky_relu":
                layers.append(LeakyReLU(spec))
            else:
                layers.append(Sigmoid())
        self.network = Network(layers)

    @classmethod
    def initialize(cls, variant: str, seed: int = 0, depth_size: int = DEPTH_SIZE,
                   autoencoder: AutoEncoder | None = None, dtype=DTYPE) -> "CompletionModel":
        rng = np.random.default_rng(seed)
        groups = {}
        for name, spec in layer_plan(variant, depth_size):
            if name is not None:
                groups[name] = init_group(name, spec, rng, dtype)
        if autoencoder is not None:
            if variant != HIGH_RES:
                raise ValueError("only the stacked variant takes a pre-trained decoder")
            dec = autoencoder.decoder
            groups["decoder"] = ParamGroup("decoder", dec.weight.astype(dtype, copy=True),
                                           dec.bias.astype(dtype, copy=True))
        return cls(variant, groups, depth_size, seed=seed)

    @property
    def groups(self) -> list[ParamGroup]:
        return self.network.groups

    @property
    def resolution(self) -> int:
        return codec.GRID if self.variant == HIGH_RES else 10

    @property
    def decoder(self) -> ParamGroup | None:
        return self.network.group("decoder") if self.variant == HIGH_RES else None

    def param_count(self) -> int:
        return self.network.param_count()

    def _prepare(self, depth: np.ndarray) -> np.ndarray:
        depth = np.asarray(depth)
        if depth.ndim == 2:
            depth = depth[None]
        if depth.shape[-2:] != (self.depth_size, self.depth_size):
            raise DimensionError(
                f"depth maps must be {self.depth_size}x{self.depth_size}, got {depth.shape[-2:]}")
        dtype = self.groups[0].weight.dtype
        return depth[:, None].astype(dtype, copy=False)

    def forward(self, depth: np.ndarray) -> np.ndarray:
        """Raw network output for a (N, H, W) batch; caches activations for backward."""
        return self.network.forward(self._prepare(depth))

    def predict(self, depth: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """(N, R, R, R) occupancy probabilities; a single (H, W) map gives (R, R, R)."""
        single = np.ndim(depth) == 2
        x = self._prepare(depth)
        outs = []
        for s in range(0, len(x), batch_size):
            outs.append(self.network.forward(x[s:s + batch_size]))
        self.network.clear()
        out = np.concatenate(outs) if outs else np.zeros((0,) + self.output_shape)
        grids = to_grid(out, self.variant)
        return grids[0] if single else grids

    @property
    def output_shape(self) -> tuple[int, ...]:
        if self.variant == HIGH_RES:
            return (codec.N_BLOCKS, codec.BLOCK_VOXELS)
        return (1000,)


def to_grid(output: np.ndarray, variant: str) -> np.ndarray:
    if variant == HIGH_RES:
        return codec.assemble(output)
    return output.reshape(output.shape[:-1] + (10, 10, 10))


def to_output(grids: np.ndarray, variant: str) -> np.ndarray:
    """Targets in the model's raw output layout."""
    grids = np.asarray(grids)
    if variant == HIGH_RES:
        return codec.partition(grids).reshape(grids.shape[:-3] + (codec.N_BLOCKS, codec.BLOCK_VOXELS))
    return grids.reshape(grids.shape[:-3] + (-1,))
