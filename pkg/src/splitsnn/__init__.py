"""Spiking split computing over a simulated free-space optical link.

An edge-side spiking encoder turns event-camera frames into binary
tokens, a learned time-hopping codec expands them into channel-friendly
spike patterns, an on-off-keyed optical link with pointing-error fading
carries the serialized bits, and a core-side spiking transformer
decodes them into class logits. The whole chain trains end-to-end with
surrogate gradients through a differentiable channel model, and an
operation-counting harness estimates event-driven energy.
"""

from .autodiff import Adam, SurrogateSpec, Tensor
from .channel import (ChannelDraw, LinkParams, ReceivedSignal,
                      decision_threshold, detect, estimate_ber,
                      sample_pointing_error, soft_receive, transmit)
from .energy import EnergyReport, EnergyTable, OpCounts, SpikeRecorder
from .estimator import SplitSnnClassifier
from .events import (DvsConfig, EventDataset, Scene, events_from_frames,
                     frames_from_motion, generate_scene, make_dataset)
from .modem import (LthParams, PpmConfig, deserialize, lth_encode,
                    lth_relaxed, ppm_demodulate, ppm_modulate, serialize)
from .pipeline import (ChannelRandomization, SplitPipeline, TrainSettings,
                       draw_link_params, evaluate_accuracy, train_pipeline)
from .snn import (DecoderConfig, EncoderConfig, LifConfig, lif_step,
                  pool_classify, spike_or)

__version__ = "0.1.0"

__all__ = [
    "Adam", "SurrogateSpec", "Tensor",
    "ChannelDraw", "LinkParams", "ReceivedSignal", "decision_threshold",
    "detect", "estimate_ber", "sample_pointing_error", "soft_receive",
    "transmit",
    "EnergyReport", "EnergyTable", "OpCounts", "SpikeRecorder",
    "SplitSnnClassifier",
    "DvsConfig", "EventDataset", "Scene", "events_from_frames",
    "frames_from_motion", "generate_scene", "make_dataset",
    "LthParams", "PpmConfig", "deserialize", "lth_encode", "lth_relaxed",
    "ppm_demodulate", "ppm_modulate", "serialize",
    "ChannelRandomization", "SplitPipeline", "TrainSettings",
    "draw_link_params", "evaluate_accuracy", "train_pipeline",
    "DecoderConfig", "EncoderConfig", "LifConfig", "lif_step",
    "pool_classify", "spike_or",
]
