"""Actor-critic network built from stacked multi-head convolutional attention.

One network per agent.  The observation vector is embedded feature-by-feature
into a two-dimensional map, run through stacked attention blocks whose per-head
context matrices pass a small convolution before concatenation, then reduced
by a bank of multi-grained row filters with max pooling.  The actor head and
the critic feed-forward share that trunk.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class AcNetConfig:
    """Shape hyperparameters for one agent's network.

    ``num_conv_filters`` filters have heights 1..N over the feature axis, so
    it can never exceed ``num_features`` (valid convolution needs at least
    one position).
    """

    num_features: int
    action_dim: int
    embed_dim: int = 64
    heads: int = 8
    num_mhca: int = 2
    num_conv_filters: int = 5
    conv_channels: int = 16
    head_kernel: int = 3
    critic_hidden: int = 64

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.num_conv_filters > self.num_features:
            raise ValueError(
                f"filter height {self.num_conv_filters} exceeds feature count {self.num_features}"
            )
        if self.num_mhca < 1 or self.num_conv_filters < 1:
            raise ValueError("need at least one attention block and one filter")
        if self.head_kernel % 2 == 0:
            raise ValueError(f"head kernel must be odd, got {self.head_kernel}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def feature_len(self) -> int:
        return self.num_conv_filters * self.conv_channels


@dataclass(frozen=True)
class AttentionOutput:
    """Per-head attention weights (B, h, F, F) and contexts (B, h, F, F'/h)."""

    weights: np.ndarray
    context: np.ndarray


def _glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(cfg: AcNetConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Glorot-uniform weights, zero biases, in a stable name order."""
    f, e, h, d = cfg.num_features, cfg.embed_dim, cfg.heads, cfg.head_dim
    kk = cfg.head_kernel
    params: dict[str, Tensor] = {}
    params["embed.w"] = Tensor(_glorot(rng, (f, e), 1, e))
    params["embed.b"] = Tensor(np.zeros((f, e)))
    for i in range(cfg.num_mhca):
        width = e if i == 0 else 2 * e
        for proj in ("q", "k", "v"):
            # column block j holds head j's projection matrix (width, head_dim)
            params[f"mhca{i}.w{proj}"] = Tensor(_glorot(rng, (width, e), width, d))
            params[f"mhca{i}.b{proj}"] = Tensor(np.zeros((e,)))
        params[f"mhca{i}.conv"] = Tensor(_glorot(rng, (h, kk, kk), kk * kk, kk * kk))
    for k in range(1, cfg.num_conv_filters + 1):
        params[f"grain{k}.w"] = Tensor(_glorot(rng, (cfg.conv_channels, k, e), k * e, cfg.conv_channels))
        params[f"grain{k}.b"] = Tensor(np.zeros((cfg.conv_channels,)))
    # output layers start near zero (the usual deterministic-policy-gradient
    # convention): actions begin at the sigmoid midpoint instead of a saturated
    # corner, and the critic's early noise cannot slam them there
    params["actor.w"] = Tensor(rng.uniform(-3e-3, 3e-3, (cfg.feature_len, cfg.action_dim)))
    params["actor.b"] = Tensor(np.zeros((cfg.action_dim,)))
    hc = cfg.critic_hidden
    params["critic.w1"] = Tensor(_glorot(rng, (cfg.feature_len + cfg.action_dim, hc), cfg.feature_len + cfg.action_dim, hc))
    params["critic.b1"] = Tensor(np.zeros((hc,)))
    params["critic.w2"] = Tensor(rng.uniform(-3e-3, 3e-3, (hc, 1)))
    params["critic.b2"] = Tensor(np.zeros((1,)))
    return params


class AcNet:
    """Shared-trunk actor-critic; forward passes are pure given parameters."""

    def __init__(self, cfg: AcNetConfig, rng: np.random.Generator | None = None,
                 params: dict[str, Tensor] | None = None):
        self.cfg = cfg
        if params is None:
            params = init_params(cfg, rng or np.random.default_rng())
        self.params = params

    # -- parameter grouping ------------------------------------------------

    def trunk_names(self) -> list[str]:
        return [n for n in self.params if not n.startswith(("actor.", "critic."))]

    def actor_names(self) -> list[str]:
        return [n for n in self.params if n.startswith("actor.")]

    def critic_names(self) -> list[str]:
        return [n for n in self.params if n.startswith("critic.")]

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.grad = None

    def clone(self) -> "AcNet":
        copied = {name: Tensor(t.data.copy()) for name, t in self.params.items()}
        return AcNet(self.cfg, params=copied)

    # -- forward passes ----------------------------------------------------

    def _batch(self, obs) -> np.ndarray:
        a = np.asarray(obs, dtype=np.float64)
        if a.ndim == 1:
            a = a[None, :]
        if a.ndim != 2 or a.shape[1] != self.cfg.num_features:
            raise ad.ShapeMismatch(
                f"observation shape {a.shape} incompatible with {self.cfg.num_features} features"
            )
        return a

    def embed_state(self, obs) -> Tensor:
        """Map each scalar feature to its own embedding row: (B, F) -> (B, F, F')."""
        a = self._batch(obs)
        s = Tensor(a[:, :, None])
        return ad.add(ad.mul(s, self.params["embed.w"]), self.params["embed.b"])

    def mhca_forward(self, x: Tensor, layer: int) -> tuple[Tensor, AttentionOutput]:
        """One attention block: Q/K/V per head, scaled softmax scores, per-head conv.

        Head outputs concatenate back to (B, F, F').  The score scaling uses
        sqrt(F') for every block, including the widened inner ones.
        """
        cfg = self.cfg
        b, f, width = x.shape
        h, d = cfg.heads, cfg.head_dim
        p = self.params
        flat = ad.reshape(x, (b * f, width))

        def project(name: str) -> Tensor:
            y = ad.relu(ad.linear(flat, p[f"mhca{layer}.w{name}"], p[f"mhca{layer}.b{name}"]))
            return ad.transpose(ad.reshape(y, (b, f, h, d)), (0, 2, 1, 3))

        q, k, v = project("q"), project("k"), project("v")
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(cfg.embed_dim))
        att = ad.softmax_rows(scores)
        ctx = ad.matmul(att, v)
        conv = ad.conv2d(ctx, p[f"mhca{layer}.conv"], padding="same")
        out = ad.reshape(ad.transpose(conv, (0, 2, 1, 3)), (b, f, cfg.embed_dim))
        return out, AttentionOutput(weights=att.data, context=ctx.data)

    def stacked_attention(self, embedded: Tensor) -> Tensor:
        """Chain the attention blocks, re-joining the embedded input before each
        inner block so downstream layers keep the original feature map."""
        x = embedded
        out = embedded
        for i in range(self.cfg.num_mhca):
            out, _ = self.mhca_forward(x, i)
            x = ad.concat([embedded, out], axis=-1)
        return out

    def multi_grained_conv(self, attended: Tensor) -> Tensor:
        """Row filters of heights 1..N, each max-pooled over positions, concatenated."""
        feats = []
        for k in range(1, self.cfg.num_conv_filters + 1):
            c = ad.add(ad.conv_rows_valid(attended, self.params[f"grain{k}.w"]),
                       self.params[f"grain{k}.b"])
            feats.append(ad.maxpool_over_axis(c, axis=1))
        return ad.concat(feats, axis=-1)

    def features(self, obs) -> Tensor:
        return self.multi_grained_conv(self.stacked_attention(self.embed_state(obs)))

    def actor_forward(self, obs) -> Tensor:
        """Bidding decision per observation, squashed componentwise into [0, 1]."""
        a = ad.linear(self.features(obs), self.params["actor.w"], self.params["actor.b"])
        return ad.sigmoid(a)

    def critic_forward(self, obs, action) -> Tensor:
        """Scalar value of an observation-action pair, shape (B, 1)."""
        act = action if isinstance(action, Tensor) else Tensor(np.atleast_2d(np.asarray(action, dtype=np.float64)))
        z = ad.concat([self.features(obs), act], axis=-1)
        hidden = ad.relu(ad.linear(z, self.params["critic.w1"], self.params["critic.b1"]))
        return ad.linear(hidden, self.params["critic.w2"], self.params["critic.b2"])

    def actor_with_value(self, obs) -> tuple[Tensor, Tensor]:
        """Actor output and its critic value on one shared trunk pass."""
        feats = self.features(obs)
        action = ad.sigmoid(ad.linear(feats, self.params["actor.w"], self.params["actor.b"]))
        z = ad.concat([feats, action], axis=-1)
        hidden = ad.relu(ad.linear(z, self.params["critic.w1"], self.params["critic.b1"]))
        q = ad.linear(hidden, self.params["critic.w2"], self.params["critic.b2"])
        return action, q

    def act(self, obs) -> np.ndarray:
        """Greedy action as a flat array (no tape, no noise)."""
        return self.actor_forward(obs).data.reshape(-1)

    # -- checkpointing -------------------------------------------------------

    def save(self, path) -> None:
        """Write all named parameter tensors plus a JSON meta entry to one .npz."""
        meta = {"format": CHECKPOINT_FORMAT, "config": asdict(self.cfg)}
        arrays = {name: t.data for name, t in self.params.items()}
        arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "AcNet":
        with np.load(path) as archive:
            meta = json.loads(str(archive["__meta__"]))
            if meta["format"] != CHECKPOINT_FORMAT:
                raise ValueError(f"unsupported checkpoint format {meta['format']}")
            cfg = AcNetConfig(**meta["config"])
            params = {name: Tensor(archive[name].copy())
                      for name in archive.files if name != "__meta__"}
        return cls(cfg, params=params)
