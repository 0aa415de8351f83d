"""The three tagging architectures, built at paper scale or shrunk desk scale
from one config type.

All models take a log-mel chunk [B, 1, n_mels, chunk_frames] and emit raw
tag logits [B, n_tags] (sigmoid is applied at loss/score time). Every model
starts with a 1-channel input batch norm that learns the global log-mel
offset/scale, and ends in a Dense called ``head`` — the output layer that
transfer re-initializes and that OutputOnly fine-tuning trains.

``width_scale`` shrinks channel counts / embedding dims but never changes
the layer topology, so desk-scale and paper-scale parameter manifests agree
on names.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dsp import ChunkSpec, DspConfig, chunk_spec_for
from .errors import ConfigError, ShapeError
from .nn import BatchNorm2d, Conv2d, Dense, InputNorm, LayerNorm, TransformerBlock

OUTPUT_LAYER_NAMES = ("head.weight", "head.bias")


@dataclass(frozen=True)
class VggishParams:
    n_conv_layers: int = 7
    base_channels: int = 128
    channel_multipliers: tuple = (1, 1, 2, 2, 2, 2, 4)
    dense_dim: int = 512
    dropout_p: float = 0.5


@dataclass(frozen=True)
class MusicnnParams:
    vertical_height_fracs: tuple = (0.4, 0.7)
    vertical_width: int = 7
    vertical_channels: int = 64
    horizontal_widths: tuple = (32, 64, 128)
    horizontal_channels: int = 64
    midend_channels: int = 64
    dense_dim: int = 200
    dropout_p: float = 0.5


@dataclass(frozen=True)
class AstParams:
    patch: int = 16
    embed_dim: int = 768
    n_layers: int = 12
    n_heads: int = 12
    mlp_ratio: float = 4.0
    dropout_p: float = 0.1


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    n_tags: int
    chunk: ChunkSpec
    n_mels: int = 128
    width_scale: float = 1.0
    vggish: VggishParams = VggishParams()
    musicnn: MusicnnParams = MusicnnParams()
    ast: AstParams = AstParams()

    def __post_init__(self):
        if self.arch not in ("vggish", "musicnn", "ast"):
            raise ConfigError(f"unknown architecture '{self.arch}'")
        if self.n_tags < 1:
            raise ConfigError(f"n_tags must be >= 1, got {self.n_tags}")
        if not (0.0 < self.width_scale <= 1.0):
            raise ConfigError(f"width_scale must be in (0, 1], got {self.width_scale}")

    def scaled(self, n: int) -> int:
        return max(1, int(round(n * self.width_scale)))

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("vggish", "musicnn", "ast"):
            d[key] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in d[key].items()}
        d["chunk"] = {"duration_sec": self.chunk.duration_sec, "n_frames": self.chunk.n_frames}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        def tup(sub, *keys):
            return {k: (tuple(v) if k in keys else v) for k, v in sub.items()}

        return cls(
            arch=d["arch"],
            n_tags=d["n_tags"],
            chunk=ChunkSpec(**d["chunk"]),
            n_mels=d["n_mels"],
            width_scale=d["width_scale"],
            vggish=VggishParams(**tup(d["vggish"], "channel_multipliers")),
            musicnn=MusicnnParams(**tup(d["musicnn"], "vertical_height_fracs",
                                        "horizontal_widths")),
            ast=AstParams(**d["ast"]),
        )


class Model:
    """Base: composed layers with flat, prefixed parameter/buffer names."""

    arch = "base"
    output_layer_names = OUTPUT_LAYER_NAMES

    def __init__(self, config: ModelConfig):
        self.config = config
        self._modules: list[tuple[str, object]] = []
        self._params: dict[str, Tensor] | None = None

    def _register(self, prefix: str, layer):
        self._modules.append((prefix, layer))
        return layer

    def named_parameters(self) -> dict[str, Tensor]:
        if self._params is None:
            out: dict[str, Tensor] = {}
            for prefix, layer in self._modules:
                for name, p in layer.named_parameters():
                    out[f"{prefix}.{name}"] = p
            self._params = out
        return self._params

    def named_buffers(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for prefix, layer in self._modules:
            for name, b in layer.named_buffers():
                out[f"{prefix}.{name}"] = b
        return out

    def named_arrays(self) -> dict[str, np.ndarray]:
        """Parameters then buffers, in registration order: the checkpoint manifest."""
        out = {name: p.data for name, p in self.named_parameters().items()}
        out.update(self.named_buffers())
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        for prefix, layer in self._modules:
            for name, b in layer.named_buffers():
                full = f"{prefix}.{name}"
                if full in arrays:
                    if arrays[full].shape != b.shape:
                        raise ShapeError(
                            f"buffer '{full}': stored shape {arrays[full].shape} "
                            f"!= model shape {b.shape}")
                    b[:] = arrays[full]
        for name, p in params.items():
            if name in arrays:
                if arrays[name].shape != p.data.shape:
                    raise ShapeError(
                        f"parameter '{name}': stored shape {arrays[name].shape} "
                        f"!= model shape {p.data.shape}")
                p.data = arrays[name].astype(p.data.dtype).copy()

    def set_trainable(self, names=None) -> None:
        """Restrict gradients to `names` (None means everything trainable)."""
        for name, p in self.named_parameters().items():
            p.requires_grad = names is None or name in names
            p.grad = None

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {n: p for n, p in self.named_parameters().items() if p.requires_grad}

    def astype(self, dtype) -> "Model":
        """Cast all parameters and buffers (used by the float64 gradient checks)."""
        for p in self.named_parameters().values():
            p.data = p.data.astype(dtype)
        for prefix, layer in self._modules:
            if isinstance(layer, BatchNorm2d):
                layer.running_mean = layer.running_mean.astype(dtype)
                layer.running_var = layer.running_var.astype(dtype)
        return self

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.named_parameters().values())

    def forward(self, x: Tensor, train: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        raise NotImplementedError


class VggIsh(Model):
    """Stack of 3x3 conv blocks with adaptive 2x2 pooling, then two dense layers.

    Pooling is 2x2 wherever both spatial dims still allow it, else 2x1/1x2
    (frequency first); the per-layer schedule is derived from the chunk
    shape at build time and exposed as ``pool_schedule``.
    """

    arch = "vggish"

    def __init__(self, config: ModelConfig, seed: int):
        super().__init__(config)
        rng = np.random.default_rng(seed)
        p = config.vggish
        if len(p.channel_multipliers) < p.n_conv_layers:
            raise ConfigError("need a channel multiplier per conv layer")
        chans = [config.scaled(p.base_channels * m)
                 for m in p.channel_multipliers[:p.n_conv_layers]]

        h, w = config.n_mels, config.chunk.n_frames
        self.pool_schedule: list[tuple[int, int]] = []
        for _ in range(p.n_conv_layers):
            kh = 2 if h >= 2 else 1
            kw = 2 if w >= 2 else 1
            if (kh, kw) == (1, 1):
                raise ConfigError(
                    f"spatial dims exhausted after {len(self.pool_schedule)} poolings; "
                    f"reduce n_conv_layers below {p.n_conv_layers}")
            self.pool_schedule.append((kh, kw))
            h //= kh
            w //= kw

        self.input_norm = self._register("input_norm", InputNorm())
        self.blocks = []
        c_in = 1
        for i, c_out in enumerate(chans):
            conv = self._register(f"block{i}.conv", Conv2d(rng, c_in, c_out, 3, padding=1))
            bn = self._register(f"block{i}.bn", BatchNorm2d(c_out))
            self.blocks.append((conv, bn, self.pool_schedule[i]))
            c_in = c_out
        self.mid = self._register("mid", Dense(rng, c_in, config.scaled(p.dense_dim)))
        self.head = self._register("head", Dense(rng, config.scaled(p.dense_dim), config.n_tags))
        self.dropout_p = p.dropout_p

    def forward(self, x, train=False, rng=None):
        h = self.input_norm(x, train)
        for conv, bn, pool in self.blocks:
            h = ad.maxpool2d(ad.relu(bn(conv(h), train)), pool)
        h = ad.global_mean_pool(h)
        h = ad.relu(self.mid(h))
        if train and self.dropout_p > 0:
            h = ad.dropout(h, self.dropout_p, seed=int(rng.integers(2 ** 63)), train=True)
        return self.head(h)


class Musicnn(Model):
    """Timbral/temporal front end, 1-d conv mid end, pooled dense back end.

    The front end runs two filter families over the input in parallel: tall
    vertical filters (heights as fractions of the mel axis) on the full
    spectrogram, and wide 1-row horizontal filters on its frequency-mean
    energy envelope. Branch outputs collapse the frequency axis and
    concatenate over channels.
    """

    arch = "musicnn"

    def __init__(self, config: ModelConfig, seed: int):
        super().__init__(config)
        rng = np.random.default_rng(seed)
        p = config.musicnn
        c_v = config.scaled(p.vertical_channels)
        c_h = config.scaled(p.horizontal_channels)
        c_m = config.scaled(p.midend_channels)

        self.input_norm = self._register("input_norm", InputNorm())
        self.vertical = []
        for i, frac in enumerate(p.vertical_height_fracs):
            height = max(1, round(frac * config.n_mels))
            if height > config.n_mels:
                raise ConfigError(f"vertical filter height {height} exceeds {config.n_mels} mels")
            conv = self._register(f"vertical{i}.conv",
                                  Conv2d(rng, 1, c_v, (height, p.vertical_width),
                                         padding=(0, p.vertical_width // 2)))
            bn = self._register(f"vertical{i}.bn", BatchNorm2d(c_v))
            self.vertical.append((conv, bn))
        self.horizontal = []
        for i, width in enumerate(p.horizontal_widths):
            conv = self._register(f"horizontal{i}.conv",
                                  Conv2d(rng, 1, c_h, (1, width), padding=(0, width // 2)))
            bn = self._register(f"horizontal{i}.bn", BatchNorm2d(c_h))
            self.horizontal.append((conv, bn))

        c_front = c_v * len(p.vertical_height_fracs) + c_h * len(p.horizontal_widths)
        self.front_channels = c_front
        self.mid1 = self._register("mid1.conv", Conv2d(rng, c_front, c_m, (1, 7), padding=(0, 3)))
        self.mid1_bn = self._register("mid1.bn", BatchNorm2d(c_m))
        self.mid2 = self._register("mid2.conv", Conv2d(rng, c_m, c_m, (1, 7), padding=(0, 3)))
        self.mid2_bn = self._register("mid2.bn", BatchNorm2d(c_m))
        self.mid = self._register("mid", Dense(rng, 2 * c_m, config.scaled(p.dense_dim)))
        self.head = self._register("head", Dense(rng, config.scaled(p.dense_dim), config.n_tags))
        self.dropout_p = p.dropout_p

    def forward(self, x, train=False, rng=None):
        T = x.shape[3]
        h0 = self.input_norm(x, train)
        envelope = ad.mean(h0, axis=2, keepdims=True)  # [B, 1, 1, T]
        branches = []
        for conv, bn in self.vertical:
            b = ad.relu(bn(conv(h0), train))
            branches.append(b.max(axis=2))  # collapse remaining frequency rows
        for conv, bn in self.horizontal:
            b = conv(envelope)
            if b.shape[3] != T:  # even-width kernels overshoot by one column
                b = b[:, :, :, :T]
            b = ad.relu(bn(b, train))
            branches.append(b.mean(axis=2))
        front = ad.concat(branches, axis=1)  # [B, C_front, T]
        h = ad.reshape(front, (front.shape[0], self.front_channels, 1, T))
        h = ad.relu(self.mid1_bn(self.mid1(h), train))
        h = ad.relu(self.mid2_bn(self.mid2(h), train))
        pooled = ad.concat([ad.global_mean_pool(h), ad.global_max_pool(h)], axis=1)
        z = ad.relu(self.mid(pooled))
        if train and self.dropout_p > 0:
            z = ad.dropout(z, self.dropout_p, seed=int(rng.integers(2 ** 63)), train=True)
        return self.head(z)


class TokenEmbeddings:
    """Class token plus trainable positional embeddings for the patch sequence."""

    def __init__(self, rng, n_patches: int, dim: int):
        self.cls = Tensor(rng.normal(0.0, 0.02, (1, 1, dim)).astype(np.float32),
                          requires_grad=True)
        self.pos = Tensor(rng.normal(0.0, 0.02, (1, n_patches + 1, dim)).astype(np.float32),
                          requires_grad=True)

    def named_parameters(self):
        yield "cls", self.cls
        yield "pos", self.pos

    def named_buffers(self):
        return iter(())


class Ast(Model):
    """Encoder-only transformer over non-overlapping square spectrogram patches.

    Patches are flattened, linearly projected, given a trainable positional
    embedding, and prepended with a classification token whose encoder
    output feeds the linear head.
    """

    arch = "ast"

    def __init__(self, config: ModelConfig, seed: int):
        super().__init__(config)
        rng = np.random.default_rng(seed)
        p = config.ast
        dim = max(p.n_heads, int(round(p.embed_dim * config.width_scale / p.n_heads)) * p.n_heads)
        self.embed_dim = dim
        self.patch = p.patch
        self.rows = config.n_mels // p.patch
        self.cols = config.chunk.n_frames // p.patch
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(
                f"input {config.n_mels}x{config.chunk.n_frames} smaller than one "
                f"{p.patch}x{p.patch} patch")
        self.n_patches = self.rows * self.cols

        self.input_norm = self._register("input_norm", InputNorm())
        self.proj = self._register("proj", Dense(rng, p.patch * p.patch, dim, init="xavier"))
        self.emb = self._register("emb", TokenEmbeddings(rng, self.n_patches, dim))
        self.blocks = [self._register(f"encoder{i}",
                                      TransformerBlock(rng, dim, p.n_heads, p.mlp_ratio,
                                                       p.dropout_p))
                       for i in range(p.n_layers)]
        self.final_norm = self._register("final_norm", LayerNorm(dim))
        self.head = self._register("head", Dense(rng, dim, config.n_tags))
        self.dropout_p = p.dropout_p

    def patchify(self, x: Tensor) -> Tensor:
        """[B, 1, F, T] -> [B, n_patches, patch*patch], row-major (freq, time) order."""
        B = x.shape[0]
        pz = self.patch
        if x.shape[2] < self.rows * pz or x.shape[3] < self.cols * pz:
            raise ShapeError(f"ast: input {x.shape} smaller than patch grid "
                             f"{self.rows * pz}x{self.cols * pz}")
        cropped = x[:, 0, : self.rows * pz, : self.cols * pz]
        g = ad.reshape(cropped, (B, self.rows, pz, self.cols, pz))
        g = ad.transpose(g, (0, 1, 3, 2, 4))
        return ad.reshape(g, (B, self.n_patches, pz * pz))

    def encode(self, tokens: Tensor, train: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        """Project patch tokens and run the encoder; returns the cls embedding [B, D]."""
        B = tokens.shape[0]
        t = self.proj(tokens)
        cls = ad.broadcast_to(self.emb.cls, (B, 1, self.embed_dim))
        seq = ad.concat([cls, t], axis=1) + self.emb.pos
        if train and self.dropout_p > 0:
            seq = ad.dropout(seq, self.dropout_p, seed=int(rng.integers(2 ** 63)), train=True)
        for blk in self.blocks:
            seq = blk(seq, train, rng)
        return self.final_norm(seq)[:, 0, :]

    def forward(self, x, train=False, rng=None):
        h = self.input_norm(x, train)
        return self.head(self.encode(self.patchify(h), train, rng))


_ARCHES = {"vggish": VggIsh, "musicnn": Musicnn, "ast": Ast}


def build_model(config: ModelConfig, seed: int) -> Model:
    return _ARCHES[config.arch](config, seed)


def paper_config(arch: str, n_tags: int, dsp: DspConfig | None = None) -> ModelConfig:
    dsp = dsp or DspConfig()
    return ModelConfig(arch=arch, n_tags=n_tags, chunk=chunk_spec_for(arch, dsp),
                       n_mels=dsp.n_mels)


def desk_config(arch: str, n_tags: int, dsp: DspConfig | None = None) -> ModelConfig:
    """Shrunk configs that train in minutes on a CPU; same topology as paper scale."""
    base = paper_config(arch, n_tags, dsp)
    if arch == "vggish":
        return replace(base, width_scale=0.0625)
    if arch == "musicnn":
        return replace(base, width_scale=0.0625,
                       musicnn=replace(base.musicnn, dense_dim=64))
    return replace(base, width_scale=0.0625,
                   ast=replace(base.ast, n_layers=1, n_heads=4, mlp_ratio=2.0, dropout_p=0.1))
