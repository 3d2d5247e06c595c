"""Full classifier assembly with ablation switches.

Pipeline: modality stems -> dynamic graph encoder (fusion point) ->
patch-to-embedding -> multi-convolutional modulator -> mean forward ->
class-token head.  The three ablation switches turn the graph encoder, the
modulator, and the mean forward into identity stages; with the graph
encoder off the embedding consumes the HSI stream directly, so the encoder
is the only place SAR/LiDAR information enters (which is exactly what the
ablation ladder measures).

All blocks are constructed regardless of the switches so a fixed seed draws
identical initial weights across ablation rungs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .encoder import HsiBranchParams, SarBranchParams, hsi_branch, sar_branch
from .errors import ConfigError
from .graph import GraphEncoderParams, graph_representation
from .head import HeadParams, MeanForwardParams, classify_head, mean_forward
from .modulator import (EmbeddingParams, ModulatorParams, modulator_forward,
                        patch_to_embedding)

__all__ = ["ModelConfig", "ThsgrModel"]


@dataclass
class ModelConfig:
    """Widths and switches for one model instance.

    Defaults follow the reference configuration (patch 15, 32 principal
    components, stem width 64, embedding 64); desk-scale runs shrink them.
    """

    n_classes: int
    patch_size: int = 15
    hsi_bands: int = 32
    companion_bands: int = 1
    spectral_kernels: tuple[int, ...] = (7, 5, 3)
    conv3d_channels: tuple[int, ...] = (8, 16, 32)
    sar_hidden: int = 32
    width: int = 64
    embed_dim: int = 64
    ff_hidden: int | None = None          # default 4 * embed_dim
    modulator_inner: int | None = None    # default embed_dim // 2
    use_graph_encoder: bool = True
    use_modulator: bool = True
    use_mean_forward: bool = True

    def validate(self) -> None:
        positive = ["n_classes", "patch_size", "hsi_bands", "companion_bands",
                    "sar_hidden", "width", "embed_dim"]
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got "
                                  f"{getattr(self, name)}")
        if self.patch_size % 2 == 0:
            raise ConfigError(f"patch_size must be odd, got {self.patch_size}")
        if len(self.spectral_kernels) != len(self.conv3d_channels):
            raise ConfigError("spectral_kernels and conv3d_channels must "
                              "have equal length")
        needed = sum(d - 1 for d in self.spectral_kernels) + 1
        if self.hsi_bands < needed:
            raise ConfigError(
                f"hsi_bands: spectral kernels {self.spectral_kernels} need at "
                f"least {needed} bands, got {self.hsi_bands}")

    @property
    def n_tokens(self) -> int:
        return self.patch_size * self.patch_size


class ThsgrModel:
    """Parameter container plus the forward pass."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        self.hsi = HsiBranchParams.create(
            rng, config.hsi_bands, config.spectral_kernels,
            config.conv3d_channels, config.width)
        self.sar = SarBranchParams.create(
            rng, hidden=config.sar_hidden, out_channels=config.width)
        self.graph = GraphEncoderParams.create(
            rng, width=config.width, n_tokens=config.n_tokens)
        self.embed = EmbeddingParams.create(
            rng, in_dim=config.width, embed_dim=config.embed_dim,
            n_tokens=config.n_tokens)
        self.modulator = ModulatorParams.create(
            rng, config.embed_dim, config.modulator_inner)
        self.mean_fwd = MeanForwardParams.create(
            rng, config.embed_dim, config.ff_hidden)
        self.head = HeadParams.create(rng, config.embed_dim, config.n_classes)

    # -- forward ------------------------------------------------------------

    def forward(self, x_h, x_l, training: bool = True) -> Tensor:
        """x_h (B, C_p, k, k), x_l (B, C_L, k, k) -> logits (B, n_classes)."""
        x_h = x_h if isinstance(x_h, Tensor) else Tensor(x_h)
        x_l = x_l if isinstance(x_l, Tensor) else Tensor(x_l)
        cfg = self.config
        b = x_h.shape[0]
        if x_h.shape != (b, cfg.hsi_bands, cfg.patch_size, cfg.patch_size):
            raise ConfigError(f"x_h shape {x_h.shape} does not match config "
                              f"(C_p={cfg.hsi_bands}, k={cfg.patch_size})")
        if x_l.shape != (b, cfg.companion_bands, cfg.patch_size, cfg.patch_size):
            raise ConfigError(f"x_l shape {x_l.shape} does not match config "
                              f"(C_L={cfg.companion_bands}, k={cfg.patch_size})")

        o1 = hsi_branch(ad.reshape(x_h, (b, 1) + x_h.shape[1:]), self.hsi,
                        training)
        if cfg.use_graph_encoder:
            o2 = sar_branch(x_l, self.sar, training)
            g = graph_representation(o1, o2, self.graph).g_map
        else:
            g = o1
        tokens = patch_to_embedding(g, self.embed)
        if cfg.use_modulator:
            tokens = modulator_forward(tokens, self.modulator)
        if cfg.use_mean_forward:
            tokens = mean_forward(tokens, self.mean_fwd)
        return classify_head(tokens, self.head)

    def predict(self, x_h, x_l, batch_size: int = 256) -> np.ndarray:
        """Argmax class indices (0-indexed) in eval mode, batched."""
        n = len(x_h)
        out = np.empty(n, dtype=np.int64)
        with no_grad():
            for start in range(0, n, batch_size):
                end = min(start + batch_size, n)
                logits = self.forward(Tensor(x_h[start:end]),
                                      Tensor(x_l[start:end]), training=False)
                out[start:end] = np.argmax(logits.data, axis=1)
        return out

    # -- parameters ----------------------------------------------------------

    def parameters(self):
        yield from self.hsi.parameters()
        yield from self.sar.parameters()
        yield from self.graph.parameters()
        yield from self.embed.parameters()
        yield from self.modulator.parameters()
        yield from self.mean_fwd.parameters()
        yield from self.head.parameters()

    def state_items(self):
        """Parameters plus BN running stats, for serialization."""
        yield from self.parameters()
        for i, bn in enumerate(self.hsi.bn):
            yield f"hsi.bn{i}.running_mean", bn.running_mean
            yield f"hsi.bn{i}.running_var", bn.running_var
        for i, bn in enumerate(self.sar.bn):
            yield f"sar.bn{i}.running_mean", bn.running_mean
            yield f"sar.bn{i}.running_var", bn.running_var

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name, holder in self.state_items():
            if name not in arrays:
                raise ConfigError(f"weights file is missing '{name}'")
            value = arrays[name]
            target = holder.data if isinstance(holder, Tensor) else holder
            if target.shape != value.shape:
                raise ConfigError(
                    f"'{name}' has shape {value.shape}, expected "
                    f"{target.shape}")
            target[...] = value
