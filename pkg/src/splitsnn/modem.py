"""Payload <-> optical symbol stream conversions.

Three codecs share this module:

  * pulse-position modulation (PPM) for the conventional bit path: each
    group of log2(M) bits selects the position of the single pulse in an
    M-slot frame;
  * the learned time-hopping (LTH) spike codec: every encoder spike is
    expanded into a K-slot binary pattern through a trainable map, so a
    '0' and a '1' can both emit distinctive, content-dependent patterns;
  * bit-exact serialization of spike tensors into the flat vectors the
    link transmits (row-major over (t, l, d); no framing bytes).
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import SurrogateSpec, Tensor
from .validation import as_binary_array, as_binary_vector, require


# -- pulse-position modulation ----------------------------------------------

@dataclass(frozen=True)
class PpmConfig:
    """PPM order; must be a power of two >= 2."""

    order: int = 4

    def __post_init__(self):
        m = self.order
        require(m >= 2 and (m & (m - 1)) == 0,
                "PPM order must be a power of two >= 2")

    @property
    def bits_per_symbol(self) -> int:
        return int(self.order).bit_length() - 1


def ppm_modulate(bits, cfg: PpmConfig) -> np.ndarray:
    """Map a bitstream to one-pulse-per-frame slots.

    Bits are chunked big-endian into symbols of ``bits_per_symbol`` bits;
    a trailing partial chunk is dropped. Output length is
    ``n_symbols * order`` with exactly one '1' per frame.
    """
    b = as_binary_vector(bits, "bits")
    k = cfg.bits_per_symbol
    require(b.size >= k, f"need at least {k} bits for one PPM symbol")
    n_symbols = b.size // k
    chunks = b[: n_symbols * k].reshape(n_symbols, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    symbols = chunks @ weights
    out = np.zeros(n_symbols * cfg.order, dtype=np.int8)
    out[np.arange(n_symbols) * cfg.order + symbols] = 1
    return out


def ppm_demodulate(values, cfg: PpmConfig) -> np.ndarray:
    """Invert PPM on detected (binary) or raw (real) slot values.

    Each frame decodes to the index of its maximum; ties and all-zero
    frames resolve to the lowest index (maximum-likelihood for OOK
    detection under symmetric noise, and deterministic).
    """
    v = np.asarray(values, dtype=np.float64)
    require(v.ndim == 1, "PPM input must be one-dimensional")
    require(v.size % cfg.order == 0,
            f"input length {v.size} is not a multiple of order {cfg.order}")
    symbols = v.reshape(-1, cfg.order).argmax(axis=1)
    k = cfg.bits_per_symbol
    shifts = np.arange(k - 1, -1, -1)
    bits = (symbols[:, None] >> shifts) & 1
    return bits.reshape(-1).astype(np.int8)


# -- learned time-hopping codec ----------------------------------------------

class LthParams:
    """Trainable parameters of the spike expansion.

    ``shared_map`` (K,) scales the scalar spike per slot; ``bias``
    (L, D, K) is a per-neuron slot bias. Slot k of the expansion of
    spike X[t,l,d] fires iff ``shared_map[k] * X + bias[l,d,k] >= 0``.
    """

    def __init__(self, shared_map, bias, requires_grad=True):
        self.shared_map = Tensor(shared_map, requires_grad=requires_grad)
        self.bias = Tensor(bias, requires_grad=requires_grad)
        require(self.shared_map.data.ndim == 1, "shared_map must be a vector")
        require(self.bias.data.ndim == 3, "bias must be (tokens, dims, K)")
        require(self.bias.data.shape[-1] == self.shared_map.data.shape[0],
                "bias slot count must match shared_map length")

    @property
    def expansion_factor(self) -> int:
        return self.shared_map.data.shape[0]

    @property
    def token_shape(self):
        return self.bias.data.shape[:2]

    @classmethod
    def init(cls, tokens: int, dims: int, expansion: int,
             rng: np.random.Generator) -> "LthParams":
        """Random init producing diverse initial patterns for 0 and 1."""
        require(expansion >= 1, "expansion factor must be >= 1")
        shared = rng.normal(0.0, 2.0, size=expansion)
        bias = rng.uniform(-1.0, 1.0, size=(tokens, dims, expansion))
        return cls(shared, bias)

    def named_tensors(self):
        return {"lth.shared_map": self.shared_map, "lth.bias": self.bias}


def _check_lth_shapes(x_shape, params: LthParams):
    require(len(x_shape) >= 3, "spike tensor must be (..., T, L, D)")
    require(tuple(x_shape[-2:]) == tuple(params.token_shape),
            f"spike tensor token shape {tuple(x_shape[-2:])} does not match "
            f"LTH bias shape {tuple(params.token_shape)}")


def lth_encode(x, params: LthParams) -> np.ndarray:
    """Expand binary spikes (..., T, L, D) to (..., K*T, L, D).

    Slot (t-1)K + k carries step(shared_map[k] * X[t] + bias[..., k]),
    with step(v) = 1 iff v >= 0.
    """
    spikes = as_binary_array(x, "spike tensor").astype(np.float64)
    _check_lth_shapes(spikes.shape, params)
    a = params.shared_map.data
    eps = params.bias.data
    k = params.expansion_factor
    pre = (spikes[..., None, :, :] * a[:, None, None]
           + np.transpose(eps, (2, 0, 1)))
    out = (pre >= 0).astype(np.int8)
    lead = spikes.shape[:-3]
    t, tokens, dims = spikes.shape[-3:]
    return out.reshape(*lead, t * k, tokens, dims)


def lth_relaxed(x: Tensor, params: LthParams, surrogate: SurrogateSpec,
                mode: str = "hard") -> Tensor:
    """Differentiable LTH expansion for training.

    Forward values equal :func:`lth_encode` exactly (hard threshold);
    the recorded gradient treats the threshold per ``surrogate``
    (straight-through style). ``mode="relaxed"`` additionally relaxes
    the forward, for finite-difference checks.
    """
    _check_lth_shapes(x.data.shape, params)
    k = params.expansion_factor
    lead = x.data.shape[:-3]
    t, tokens, dims = x.data.shape[-3:]
    expanded = ad.reshape(x, (*lead, t, 1, tokens, dims))
    slope = ad.reshape(params.shared_map, (k, 1, 1))
    pre = ad.add(ad.mul(expanded, slope),
                 ad.transpose(params.bias, (2, 0, 1)))
    spikes = ad.heaviside_surrogate(pre, surrogate, mode=mode)
    return ad.reshape(spikes, (*lead, t * k, tokens, dims))


# -- serialization -----------------------------------------------------------

def serialize(spike_tensor) -> np.ndarray:
    """Flatten (T', L, D) row-major over (t, l, d) into a bit vector."""
    arr = np.asarray(spike_tensor)
    return np.ascontiguousarray(arr).reshape(-1)


def deserialize(values, dims) -> np.ndarray:
    """Inverse of :func:`serialize`; accepts real-valued inputs unchanged."""
    arr = np.asarray(values)
    expected = int(np.prod(dims))
    require(arr.size == expected,
            f"vector length {arr.size} does not match dims {tuple(dims)}")
    return arr.reshape(tuple(dims))
