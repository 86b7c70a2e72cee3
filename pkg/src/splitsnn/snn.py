"""Spiking model zoo: LIF dynamics, patch splitting, token-mixer encoder
blocks, stochastic-attention transformer decoder layers, and the pooled
temporal classifier.

Every activation is a leaky integrate-and-fire (LIF) site:

    V- = decay * V+ + I,   spike = step(V- - threshold),   V+ = V- (1 - spike)

with step(0) = 1 everywhere in the package. All inter-layer traffic on
the hard path is exactly binary; residual merges use the saturating OR
``a + b - a*b``, which preserves binarity without extra neuron state.

Layers are stateless between sequences: forward passes allocate fresh
membrane potentials, so evaluations of distinct sequences are
independent and parallelizable while weights stay read-only.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormStats, SurrogateSpec, Tensor
from .validation import require


# -- LIF ----------------------------------------------------------------------

@dataclass(frozen=True)
class LifConfig:
    """Per-layer-group membrane constants."""

    decay: float = 0.9
    threshold: float = 1.0

    def __post_init__(self):
        require(0.0 <= self.decay <= 1.0, "decay must lie in [0, 1]")
        require(self.threshold > 0, "threshold must be > 0")


def lif_step(v, current, cfg: LifConfig, surrogate: SurrogateSpec,
             mode: str = "hard"):
    """One LIF update. ``v`` may be None for a fresh (zero) state.

    Returns ``(spikes, v_next)``; a firing neuron's potential resets to
    exactly 0 via multiplication by (1 - spike).
    """
    if v is None:
        v = Tensor(np.zeros_like(current.data))
    require(v.data.shape == current.data.shape,
            f"state shape {v.data.shape} does not match input {current.data.shape}")
    v_pre = ad.add(ad.scale(v, cfg.decay), current)
    spikes = ad.heaviside_surrogate(
        ad.add(v_pre, Tensor(-cfg.threshold)), surrogate, mode=mode)
    v_next = ad.mul(v_pre, ad.one_minus(spikes))
    return spikes, v_next


class Lif:
    """A named LIF activation site (state is owned by the caller's loop)."""

    def __init__(self, name: str, cfg: LifConfig, surrogate: SurrogateSpec):
        self.name = name
        self.cfg = cfg
        self.surrogate = surrogate

    def step(self, v, current, mode="hard", recorder=None):
        spikes, v_next = lif_step(v, current, self.cfg, self.surrogate, mode)
        if recorder is not None:
            recorder.record_lif(self.name, current.data.size)
            recorder.record_spikes(self.name, spikes.data)
        return spikes, v_next


def spike_or(a: Tensor, b: Tensor) -> Tensor:
    """Saturating OR: a + b - a*b (equals min(a+b, 1) on binary inputs)."""
    return ad.add(ad.add(a, b), ad.neg(ad.mul(a, b)))


def _record_affine(recorder, name, x: Tensor, fan_out: int):
    if recorder is not None:
        recorder.record_affine(name, x.data, fan_out)


# -- configs -------------------------------------------------------------------

@dataclass(frozen=True)
class EncoderConfig:
    """Geometry of the edge encoder (desk-scale defaults)."""

    height: int = 32
    width: int = 32
    patch: int = 8
    token_dim: int = 32
    layers: int = 2
    timesteps: int = 5
    lth_expansion: int = 2

    def __post_init__(self):
        require(self.height > 0 and self.width > 0, "input size must be positive")
        require(self.patch > 0 and self.height % self.patch == 0
                and self.width % self.patch == 0,
                "patch size must divide height and width")
        for fld in ("token_dim", "layers", "timesteps", "lth_expansion"):
            require(getattr(self, fld) > 0, f"{fld} must be positive")

    @property
    def tokens(self) -> int:
        return (self.height // self.patch) * (self.width // self.patch)

    @property
    def patch_inputs(self) -> int:
        # two polarity channels per pixel
        return 2 * self.patch * self.patch


@dataclass(frozen=True)
class DecoderConfig:
    """Geometry of the core decoder (desk-scale defaults)."""

    embed_dim: int = 32
    heads: int = 4
    layers: int = 2
    classes: int = 4

    def __post_init__(self):
        for fld in ("embed_dim", "heads", "layers", "classes"):
            require(getattr(self, fld) > 0, f"{fld} must be positive")
        require(self.embed_dim % self.heads == 0,
                "head count must divide embed_dim")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads


# -- encoder -------------------------------------------------------------------

def split_polarity_patches(frames: np.ndarray, patch: int) -> np.ndarray:
    """(B, T, H, W) event frames -> (B, T, N, 2*P*P) patch vectors.

    Each P x P patch contributes its +1 events and -1 events as two
    nonnegative channels, flattened; patches are ordered row-major.
    """
    b, t, h, w = frames.shape
    require(h % patch == 0 and w % patch == 0, "patch must divide frame size")
    hp, wp = h // patch, w // patch
    tiles = (frames.reshape(b, t, hp, patch, wp, patch)
             .transpose(0, 1, 2, 4, 3, 5)
             .reshape(b, t, hp * wp, patch * patch))
    positive = (tiles == 1).astype(np.float64)
    negative = (tiles == -1).astype(np.float64)
    return np.concatenate([positive, negative], axis=-1)


class PatchSplitter:
    """Patch vectors -> affine -> batch norm -> LIF binary tokens."""

    def __init__(self, cfg: EncoderConfig, lif_cfg: LifConfig,
                 surrogate: SurrogateSpec, rng: np.random.Generator,
                 name="encoder.patch"):
        fan_in = cfg.patch_inputs
        self.cfg = cfg
        self.name = name
        self.weight = Tensor(rng.normal(0, fan_in ** -0.5,
                                        size=(fan_in, cfg.token_dim)),
                             requires_grad=True)
        self.bn_gamma = Tensor(np.ones(cfg.token_dim), requires_grad=True)
        self.bn_beta = Tensor(np.zeros(cfg.token_dim), requires_grad=True)
        self.bn_stats = BatchNormStats(cfg.token_dim)
        self.lif = Lif(f"{name}.lif", lif_cfg, surrogate)

    def step(self, patch_vec: Tensor, v, training, mode="hard", recorder=None):
        _record_affine(recorder, f"{self.name}.affine", patch_vec,
                       self.cfg.token_dim)
        current = ad.batch_norm(ad.matmul(patch_vec, self.weight),
                                self.bn_gamma, self.bn_beta,
                                self.bn_stats, training)
        return self.lif.step(v, current, mode, recorder)

    def named_tensors(self):
        return {f"{self.name}.weight": self.weight,
                f"{self.name}.bn_gamma": self.bn_gamma,
                f"{self.name}.bn_beta": self.bn_beta}


class MixerBlock:
    """Token mixing then channel mixing, each behind a saturating-OR
    residual: tokens talk through an N x N map, channels through a
    D x D map with bias, both spiking."""

    def __init__(self, tokens: int, dim: int, lif_cfg: LifConfig,
                 surrogate: SurrogateSpec, rng: np.random.Generator,
                 name="mixer"):
        self.tokens = tokens
        self.dim = dim
        self.name = name
        self.value_weight = Tensor(rng.normal(0, dim ** -0.5, size=(dim, dim)),
                                   requires_grad=True)
        self.token_weight = Tensor(rng.normal(0, 2.0 * tokens ** -0.5,
                                              size=(tokens, tokens)),
                                   requires_grad=True)
        self.channel_weight = Tensor(rng.normal(0, dim ** -0.5, size=(dim, dim)),
                                     requires_grad=True)
        self.channel_bias = Tensor(np.zeros(dim), requires_grad=True)
        self.bn_value_gamma = Tensor(np.ones(dim), requires_grad=True)
        self.bn_value_beta = Tensor(np.zeros(dim), requires_grad=True)
        self.bn_value_stats = BatchNormStats(dim)
        self.bn_channel_gamma = Tensor(np.ones(dim), requires_grad=True)
        self.bn_channel_beta = Tensor(np.zeros(dim), requires_grad=True)
        self.bn_channel_stats = BatchNormStats(dim)
        self.lif_value = Lif(f"{name}.lif_value", lif_cfg, surrogate)
        self.lif_token = Lif(f"{name}.lif_token", lif_cfg, surrogate)
        self.lif_channel = Lif(f"{name}.lif_channel", lif_cfg, surrogate)

    def fresh_state(self):
        return {"value": None, "token": None, "channel": None}

    def step(self, x: Tensor, state: dict, training, mode="hard",
             recorder=None) -> Tensor:
        _record_affine(recorder, f"{self.name}.value", x, self.dim)
        inner = ad.batch_norm(ad.matmul(x, self.value_weight),
                              self.bn_value_gamma, self.bn_value_beta,
                              self.bn_value_stats, training)
        value_spikes, state["value"] = self.lif_value.step(
            state["value"], inner, mode, recorder)
        _record_affine(recorder, f"{self.name}.token", value_spikes, self.tokens)
        mixed, state["token"] = self.lif_token.step(
            state["token"], ad.matmul(self.token_weight, value_spikes),
            mode, recorder)
        x = spike_or(x, mixed)
        _record_affine(recorder, f"{self.name}.channel", x, self.dim)
        channel = ad.batch_norm(
            ad.add(ad.matmul(x, self.channel_weight), self.channel_bias),
            self.bn_channel_gamma, self.bn_channel_beta,
            self.bn_channel_stats, training)
        channel_spikes, state["channel"] = self.lif_channel.step(
            state["channel"], channel, mode, recorder)
        return spike_or(x, channel_spikes)

    def named_tensors(self):
        return {
            f"{self.name}.value_weight": self.value_weight,
            f"{self.name}.token_weight": self.token_weight,
            f"{self.name}.channel_weight": self.channel_weight,
            f"{self.name}.channel_bias": self.channel_bias,
            f"{self.name}.bn_value_gamma": self.bn_value_gamma,
            f"{self.name}.bn_value_beta": self.bn_value_beta,
            f"{self.name}.bn_channel_gamma": self.bn_channel_gamma,
            f"{self.name}.bn_channel_beta": self.bn_channel_beta,
        }


class Encoder:
    """Patch splitting followed by a stack of mixer blocks.

    ``forward`` maps (B, T, H, W) event frames to a binary spike tensor
    of shape (B, T, N, D); LIF states are fresh per call.
    """

    def __init__(self, cfg: EncoderConfig, lif_cfg: LifConfig,
                 surrogate: SurrogateSpec, rng: np.random.Generator):
        self.cfg = cfg
        self.patch = PatchSplitter(cfg, lif_cfg, surrogate, rng)
        self.blocks = [
            MixerBlock(cfg.tokens, cfg.token_dim, lif_cfg, surrogate, rng,
                       name=f"encoder.block{i}")
            for i in range(cfg.layers)
        ]

    def forward(self, frames: np.ndarray, training=False, mode="hard",
                recorder=None) -> Tensor:
        require(frames.ndim == 4, "frames must be (batch, T, H, W)")
        require(frames.shape[1] == self.cfg.timesteps,
                f"expected {self.cfg.timesteps} timesteps, got {frames.shape[1]}")
        patch_vecs = split_polarity_patches(frames, self.cfg.patch)
        patch_state = None
        states = [blk.fresh_state() for blk in self.blocks]
        outputs = []
        for t in range(self.cfg.timesteps):
            x, patch_state = self.patch.step(
                Tensor(patch_vecs[:, t]), patch_state, training, mode, recorder)
            for blk, st in zip(self.blocks, states):
                x = blk.step(x, st, training, mode, recorder)
            outputs.append(x)
        return ad.stack(outputs, axis=1)

    def named_tensors(self):
        out = dict(self.patch.named_tensors())
        for blk in self.blocks:
            out.update(blk.named_tensors())
        return out

    def bn_stats(self):
        out = {f"{self.patch.name}.bn": self.patch.bn_stats}
        for blk in self.blocks:
            out[f"{blk.name}.bn_value"] = blk.bn_value_stats
            out[f"{blk.name}.bn_channel"] = blk.bn_channel_stats
        return out


# -- decoder -------------------------------------------------------------------

def mask_probabilities(queries: Tensor, keys: Tensor) -> Tensor:
    """Token-pair attention probabilities: (Q @ K^T) / head_dim.

    On binary Q/K this is the mean of AND-matches over the head
    dimension, so every entry lies in [0, 1] by construction.
    """
    head_dim = queries.data.shape[-1]
    return ad.scale(ad.matmul(queries, ad.swap_last(keys)), 1.0 / head_dim)


def attend_probabilities(mask: Tensor, values: Tensor) -> Tensor:
    """Attended-value probabilities: (M @ V) / token_count."""
    tokens = mask.data.shape[-1]
    return ad.scale(ad.matmul(mask, values), 1.0 / tokens)


class SvitLayer:
    """Stochastic spiking attention plus a two-layer spiking FFN.

    Per head, binary Q/K/V come from LIF sites; the attention mask and
    the attended values are Bernoulli draws over AND-accumulate
    statistics (resampled independently every timestep), with a
    straight-through backward. Heads are concatenated and passed
    through LIF(LIF(A W1 + b1) W2 + b2).
    """

    def __init__(self, tokens: int, cfg: DecoderConfig, lif_cfg: LifConfig,
                 surrogate: SurrogateSpec, rng: np.random.Generator,
                 name="svit"):
        d_e, d_k = cfg.embed_dim, cfg.head_dim
        self.cfg = cfg
        self.tokens = tokens
        self.name = name

        def head_stack():
            return Tensor(rng.normal(0, 2.0 * d_e ** -0.5,
                                     size=(cfg.heads, d_e, d_k)),
                          requires_grad=True)

        self.query_weight = head_stack()
        self.key_weight = head_stack()
        self.value_weight = head_stack()
        self.ffn1_weight = Tensor(rng.normal(0, 2.0 * d_e ** -0.5,
                                             size=(d_e, d_e)),
                                  requires_grad=True)
        self.ffn1_bias = Tensor(np.zeros(d_e), requires_grad=True)
        self.ffn2_weight = Tensor(rng.normal(0, 2.0 * d_e ** -0.5,
                                             size=(d_e, d_e)),
                                  requires_grad=True)
        self.ffn2_bias = Tensor(np.zeros(d_e), requires_grad=True)
        self.lif_query = Lif(f"{name}.lif_query", lif_cfg, surrogate)
        self.lif_key = Lif(f"{name}.lif_key", lif_cfg, surrogate)
        self.lif_value = Lif(f"{name}.lif_value", lif_cfg, surrogate)
        self.lif_ffn1 = Lif(f"{name}.lif_ffn1", lif_cfg, surrogate)
        self.lif_ffn2 = Lif(f"{name}.lif_ffn2", lif_cfg, surrogate)

    def fresh_state(self):
        return {k: None for k in ("query", "key", "value", "ffn1", "ffn2")}

    def attention(self, embed: Tensor, state: dict, rng, mode="hard",
                  recorder=None) -> Tensor:
        batch, tokens, d_e = embed.data.shape
        require(tokens == self.tokens, "token count changed mid-model")
        x = ad.reshape(embed, (batch, 1, tokens, d_e))
        _record_affine(recorder, f"{self.name}.qkv", x,
                       3 * self.cfg.head_dim * self.cfg.heads)
        q, state["query"] = self.lif_query.step(
            state["query"], ad.matmul(x, self.query_weight), mode, recorder)
        k, state["key"] = self.lif_key.step(
            state["key"], ad.matmul(x, self.key_weight), mode, recorder)
        v, state["value"] = self.lif_value.step(
            state["value"], ad.matmul(x, self.value_weight), mode, recorder)
        mask_probs = mask_probabilities(q, k)
        mask = ad.bernoulli_ste(mask_probs, rng)
        attend_probs = attend_probabilities(mask, v)
        attended = ad.bernoulli_ste(attend_probs, rng)
        if recorder is not None:
            recorder.record_affine(f"{self.name}.mask", q.data, tokens)
            recorder.record_affine(f"{self.name}.attend", mask.data,
                                   self.cfg.head_dim)
            recorder.record_draws(f"{self.name}.mask", mask.data.size)
            recorder.record_draws(f"{self.name}.attend", attended.data.size)
            recorder.record_spikes(f"{self.name}.mask", mask.data)
            recorder.record_spikes(f"{self.name}.attend", attended.data)
        # concatenate heads: (B, H, L, Dk) -> (B, L, H*Dk)
        merged = ad.reshape(ad.transpose(attended, (0, 2, 1, 3)),
                            (batch, tokens, d_e))
        return merged

    def step(self, embed: Tensor, state: dict, rng, mode="hard",
             recorder=None) -> Tensor:
        attended = self.attention(embed, state, rng, mode, recorder)
        _record_affine(recorder, f"{self.name}.ffn1", attended,
                       self.cfg.embed_dim)
        hidden, state["ffn1"] = self.lif_ffn1.step(
            state["ffn1"],
            ad.add(ad.matmul(attended, self.ffn1_weight), self.ffn1_bias),
            mode, recorder)
        _record_affine(recorder, f"{self.name}.ffn2", hidden,
                       self.cfg.embed_dim)
        out, state["ffn2"] = self.lif_ffn2.step(
            state["ffn2"],
            ad.add(ad.matmul(hidden, self.ffn2_weight), self.ffn2_bias),
            mode, recorder)
        return out

    def named_tensors(self):
        return {
            f"{self.name}.query_weight": self.query_weight,
            f"{self.name}.key_weight": self.key_weight,
            f"{self.name}.value_weight": self.value_weight,
            f"{self.name}.ffn1_weight": self.ffn1_weight,
            f"{self.name}.ffn1_bias": self.ffn1_bias,
            f"{self.name}.ffn2_weight": self.ffn2_weight,
            f"{self.name}.ffn2_bias": self.ffn2_bias,
        }


def pool_classify(embeddings, classifier_weight: Tensor) -> Tensor:
    """Mean over tokens, then over timesteps, then project to logits.

    ``embeddings`` is a stacked (B, T', L, D_E) tensor or a list of
    (B, L, D_E) tensors, one per timestep.
    """
    if isinstance(embeddings, (list, tuple)):
        require(len(embeddings) > 0, "empty embedding sequence")
        embeddings = ad.stack(list(embeddings), axis=1)
    require(embeddings.data.ndim == 4, "expected (B, T', L, D_E)")
    require(embeddings.data.shape[1] > 0, "empty embedding sequence")
    token_mean = ad.tmean(embeddings, axis=2)
    time_mean = ad.tmean(token_mean, axis=1)
    return ad.matmul(time_mean, classifier_weight)


class Decoder:
    """Embedding, a stack of attention layers, and the pooled classifier.

    ``forward`` maps the (B, T', L, D) received spike tensor (real or
    binary values) to class logits (B, C). One Bernoulli stream drives
    all attention draws; pass a derived stream per evaluation.
    """

    def __init__(self, tokens: int, in_dim: int, cfg: DecoderConfig,
                 lif_cfg: LifConfig, surrogate: SurrogateSpec,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.tokens = tokens
        self.in_dim = in_dim
        self.embed_weight = Tensor(
            rng.normal(0, 2.0 * in_dim ** -0.5, size=(in_dim, cfg.embed_dim)),
            requires_grad=True)
        self.pos_table = Tensor(rng.normal(0, 0.5,
                                           size=(tokens, cfg.embed_dim)),
                                requires_grad=True)
        self.layers = [
            SvitLayer(tokens, cfg, lif_cfg, surrogate, rng,
                      name=f"decoder.layer{i}")
            for i in range(cfg.layers)
        ]
        self.classifier_weight = Tensor(
            rng.normal(0, cfg.embed_dim ** -0.5,
                       size=(cfg.embed_dim, cfg.classes)),
            requires_grad=True)
        self.lif_embed = Lif("decoder.embed.lif", lif_cfg, surrogate)

    def embed_step(self, received: Tensor, v, mode="hard", recorder=None):
        _record_affine(recorder, "decoder.embed", received, self.cfg.embed_dim)
        current = ad.add(ad.matmul(received, self.embed_weight),
                         self.pos_table)
        return self.lif_embed.step(v, current, mode, recorder)

    def forward(self, received: Tensor, rng: np.random.Generator,
                mode="hard", recorder=None) -> Tensor:
        require(received.data.ndim == 4, "expected (B, T', L, D)")
        batch, steps, tokens, in_dim = received.data.shape
        require(tokens == self.tokens and in_dim == self.in_dim,
                f"received shape {(tokens, in_dim)} does not match decoder "
                f"({self.tokens}, {self.in_dim})")
        require(steps > 0, "empty received sequence")
        embed_state = None
        states = [layer.fresh_state() for layer in self.layers]
        outputs = []
        for t in range(steps):
            x, embed_state = self.embed_step(
                ad.index_axis(received, 1, t), embed_state, mode, recorder)
            for layer, st in zip(self.layers, states):
                x = layer.step(x, st, rng, mode, recorder)
            outputs.append(x)
        return pool_classify(outputs, self.classifier_weight)

    def named_tensors(self):
        out = {
            "decoder.embed_weight": self.embed_weight,
            "decoder.pos_table": self.pos_table,
            "decoder.classifier_weight": self.classifier_weight,
        }
        for layer in self.layers:
            out.update(layer.named_tensors())
        return out
