"""Free-space optical inter-satellite link with OOK and pointing-error fading.

The link model: a binary sequence intensity-modulates the optical
carrier (on power ``P_on`` for a '1', dark for a '0'). The received
photocurrent per bit is

    y[n] = R * G_o * L_FS * x[n] * exp(-G * e[n]) + w[n]

where ``e[n]`` is the residual pointing error after beam tracking,
modelled as a chi-square variable with 4 degrees of freedom built from
Gaussian components of variance ``sigma^2 / 2`` each, and ``w[n]`` is
zero-mean Gaussian noise of variance ``sigma_0^2 + k * signal``. The
per-component variance convention makes the fading mean exact:

    E[exp(-G * e)] = (1 + G * sigma^2)^-2

which is the factor appearing in the hard-decision threshold, so the
sampler and the threshold are mutually consistent by construction.

All operations are pure given (params, rng); callers running in
parallel should hand each worker its own derived stream.
"""

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .rng import derive_rng
from .validation import as_binary_vector, require


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def loss_db_to_linear(loss_db: float) -> float:
    """A 'loss of X dB' becomes the multiplicative factor 10^(-X/10)."""
    return 10.0 ** (-loss_db / 10.0)


@dataclass(frozen=True)
class LinkParams:
    """Physical constants of the optical link.

    All gain/loss fields are linear factors; use :meth:`from_config` to
    convert ``*_db`` entries exactly once at parse time.
    """

    responsivity: float = 0.8           # photodetector R, A/W
    amplifier_gain: float = 1000.0      # optical amplifier G_o, linear
    free_space_loss: float = loss_db_to_linear(14.3)  # L_FS, linear <= 1
    pointing_sensitivity: float = 1e6   # G, dimensionless
    pointing_variance: float = 0.0      # sigma^2 of the error components
    noise_floor: float = 0.0            # sigma_0^2, signal-independent
    signal_noise_factor: float = 0.0    # k, signal-dependent noise scale
    on_power: float = 1e-3              # P_on, W

    def __post_init__(self):
        require(self.responsivity >= 0, "responsivity must be >= 0")
        require(self.amplifier_gain >= 1, "amplifier_gain must be >= 1 (linear)")
        require(0 < self.free_space_loss <= 1,
                "free_space_loss must be a linear factor in (0, 1]")
        require(self.pointing_sensitivity >= 0, "pointing_sensitivity must be >= 0")
        require(self.pointing_variance >= 0, "pointing_variance must be >= 0")
        require(self.noise_floor >= 0, "noise_floor must be >= 0")
        require(self.signal_noise_factor >= 0, "signal_noise_factor must be >= 0")
        require(self.on_power >= 0, "on_power must be >= 0")

    @classmethod
    def from_config(cls, cfg: dict) -> "LinkParams":
        """Build from a config dict, converting ``*_db`` fields to linear.

        ``amplifier_gain_db`` is a gain (10^(+dB/10)); ``free_space_loss_db``
        is a loss figure (10^(-dB/10)).
        """
        cfg = dict(cfg)
        if "amplifier_gain_db" in cfg:
            require("amplifier_gain" not in cfg,
                    "give amplifier_gain or amplifier_gain_db, not both")
            cfg["amplifier_gain"] = db_to_linear(cfg.pop("amplifier_gain_db"))
        if "free_space_loss_db" in cfg:
            require("free_space_loss" not in cfg,
                    "give free_space_loss or free_space_loss_db, not both")
            cfg["free_space_loss"] = loss_db_to_linear(cfg.pop("free_space_loss_db"))
        return cls(**cfg)

    @property
    def on_level(self) -> float:
        """Noiseless, unfaded photocurrent of a '1' bit: R*G_o*L_FS*P_on."""
        return (self.responsivity * self.amplifier_gain
                * self.free_space_loss * self.on_power)


@dataclass(frozen=True)
class ReceivedSignal:
    """Photocurrent samples, one per transmitted bit."""

    samples: np.ndarray


@dataclass(frozen=True)
class ChannelDraw:
    """Random state realized by one transmission."""

    pointing_errors: np.ndarray
    noise: np.ndarray
    seed: Optional[int] = None


RngLike = Union[int, np.random.Generator]


def _as_rng(rng: RngLike):
    if isinstance(rng, np.random.Generator):
        return rng, None
    return derive_rng(int(rng), "channel"), int(rng)


def sample_pointing_error(variance: float, n: int,
                          rng: RngLike) -> np.ndarray:
    """Draw per-bit pointing errors e[n] >= 0.

    Each error is the sum of the squares of 4 independent zero-mean
    Gaussians of variance ``variance / 2``, so the sample mean converges
    to ``2 * variance`` and E[exp(-G e)] = (1 + G variance)^-2.
    """
    require(variance >= 0, "pointing variance must be >= 0")
    require(n >= 1, "sample count must be >= 1")
    gen, _ = _as_rng(rng)
    if variance == 0:
        return np.zeros(n)
    components = gen.normal(0.0, np.sqrt(variance / 2.0), size=(4, n))
    return np.einsum("ij,ij->j", components, components)


def transmit(s, params: LinkParams, rng: RngLike):
    """Send a binary vector through the link.

    Returns ``(ReceivedSignal, ChannelDraw)``. The draw is reproducible:
    the same rng state and params give identical arrays.
    """
    bits = as_binary_vector(s, "transmit input")
    require(bits.size > 0, "transmit input must be non-empty")
    gen, seed = _as_rng(rng)
    e = sample_pointing_error(params.pointing_variance, bits.size, gen)
    x = params.on_power * bits.astype(np.float64)
    gain = (params.responsivity * params.amplifier_gain
            * params.free_space_loss)
    signal = gain * x * np.exp(-params.pointing_sensitivity * e)
    noise_var = params.noise_floor + params.signal_noise_factor * signal
    if np.any(noise_var > 0):
        w = gen.normal(0.0, np.sqrt(noise_var))
    else:
        w = np.zeros_like(signal)
    return ReceivedSignal(signal + w), ChannelDraw(e, w, seed)


def decision_threshold(params: LinkParams) -> float:
    """Hard-decision threshold: half the expected faded '1' level.

    theta = 1/2 * R * G_o * P_on * L_FS * (1 + G sigma^2)^-2.
    """
    fading_mean = (1.0 + params.pointing_sensitivity
                   * params.pointing_variance) ** -2
    return 0.5 * params.on_level * fading_mean


def _samples(y) -> np.ndarray:
    return np.asarray(getattr(y, "samples", y), dtype=np.float64)


def detect(y, threshold: float) -> np.ndarray:
    """Hard-threshold each sample: 1 iff y > threshold (ties go to 0)."""
    require(threshold >= 0, "threshold must be >= 0")
    return (_samples(y) > threshold).astype(np.int8)


def soft_receive(y, params: LinkParams) -> np.ndarray:
    """Normalize photocurrents so a clean '1' maps to 1.0 and '0' to 0.0.

    Output is not clipped: noise may push values below 0 or above 1; the
    decoder's first affine layer absorbs the range.
    """
    require(params.on_power > 0, "soft receive requires on_power > 0")
    return _samples(y) / params.on_level


def estimate_ber(params: LinkParams, n_bits: int, rng: RngLike) -> float:
    """Monte-Carlo bit error rate of transmit -> detect on random bits.

    Stream order (stable): bits first, then the channel draw.
    """
    require(n_bits >= 1, "n_bits must be >= 1")
    gen, _ = _as_rng(rng)
    bits = gen.integers(0, 2, size=n_bits, dtype=np.int8)
    received, _ = transmit(bits, params, gen)
    decided = detect(received, decision_threshold(params))
    return float(np.mean(decided != bits))
