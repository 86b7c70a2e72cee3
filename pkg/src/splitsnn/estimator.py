"""Scikit-learn style estimator wrapping the split pipeline.

``SplitSnnClassifier`` exposes the end-to-end system as a plain
fit/predict classifier: X is an array of event-frame sequences
(n_samples, T, H, W) with values in {-1, 0, +1}, y the class labels.
Fitting trains encoder, spike codec, and decoder jointly across the
randomized channel; prediction runs inference through the configured
evaluation link (or a clean bypass when none is given). Hyperparameters
follow sklearn conventions (stored verbatim by ``__init__``, mirrored
by ``get_params``/``set_params``) so the classifier composes with
model selection tooling.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .autodiff import SurrogateSpec
from .channel import LinkParams
from .events import NUM_SCENE_CLASSES
from .pipeline import (ChannelRandomization, SplitPipeline, TrainSettings,
                       evaluate_logits, train_pipeline)
from .rng import derive_rng
from .snn import DecoderConfig, EncoderConfig, LifConfig
from .validation import as_event_frames, require


class SplitSnnClassifier(BaseEstimator, ClassifierMixin):
    """Spiking split-computing classifier over a stochastic optical link.

    Parameters
    ----------
    patch_size : side of the square patches the encoder tokenizes.
    token_dim : encoder token dimension D.
    encoder_layers : number of token/channel mixing blocks.
    lth_expansion : K, slots per spike on the wire.
    embed_dim, heads, decoder_layers : decoder geometry.
    lif_decay, lif_threshold : membrane constants for every LIF site.
    surrogate_kind, surrogate_param : backward relaxation of the spike
        threshold ("boxcar" width or "fast-sigmoid" slope).
    epochs, batch_size, learning_rate : training loop settings.
    channel_train : ChannelRandomization for per-batch draws, or None
        to train channel-free.
    channel_eval : LinkParams used by predict/score, or None for a
        clean bypass.
    receive_mode : "soft", "hard", or "clean" decoder input.
    random_state : master seed; all streams derive from it.
    """

    def __init__(self, patch_size=8, token_dim=32, encoder_layers=2,
                 lth_expansion=2, embed_dim=32, heads=4, decoder_layers=2,
                 lif_decay=0.9, lif_threshold=1.0,
                 surrogate_kind="boxcar", surrogate_param=1.0,
                 epochs=30, batch_size=16, learning_rate=1e-3,
                 channel_train=None, channel_eval=None,
                 receive_mode="soft", random_state=0, verbose=False):
        self.patch_size = patch_size
        self.token_dim = token_dim
        self.encoder_layers = encoder_layers
        self.lth_expansion = lth_expansion
        self.embed_dim = embed_dim
        self.heads = heads
        self.decoder_layers = decoder_layers
        self.lif_decay = lif_decay
        self.lif_threshold = lif_threshold
        self.surrogate_kind = surrogate_kind
        self.surrogate_param = surrogate_param
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.channel_train = channel_train
        self.channel_eval = channel_eval
        self.receive_mode = receive_mode
        self.random_state = random_state
        self.verbose = verbose

    # -- sklearn plumbing -----------------------------------------------------

    def _check_x(self, X) -> np.ndarray:
        frames = as_event_frames(X, "X")
        require(frames.ndim == 4,
                "X must be (n_samples, timesteps, height, width)")
        return frames

    def _build(self, timesteps, height, width, classes) -> SplitPipeline:
        encoder_cfg = EncoderConfig(
            height=height, width=width, patch=self.patch_size,
            token_dim=self.token_dim, layers=self.encoder_layers,
            timesteps=timesteps, lth_expansion=self.lth_expansion)
        decoder_cfg = DecoderConfig(
            embed_dim=self.embed_dim, heads=self.heads,
            layers=self.decoder_layers, classes=classes)
        lif_cfg = LifConfig(decay=self.lif_decay,
                            threshold=self.lif_threshold)
        surrogate = SurrogateSpec(self.surrogate_kind, self.surrogate_param)
        return SplitPipeline(encoder_cfg, decoder_cfg, lif_cfg, surrogate,
                             derive_rng(self.random_state, "init"))

    def fit(self, X, y, eval_set=None):
        """Train end-to-end across the randomized channel.

        ``eval_set`` is an optional (X_eval, y_eval) pair used for
        best-checkpoint selection; when omitted, the training set is
        reused.
        """
        frames = self._check_x(X)
        labels = np.asarray(y, dtype=np.int64)
        require(labels.shape == (frames.shape[0],),
                "y must have one label per sample")
        self.classes_ = np.unique(labels)
        class_index = {c: i for i, c in enumerate(self.classes_)}
        encoded = np.asarray([class_index[c] for c in labels])
        _, timesteps, height, width = frames.shape
        self.pipeline_ = self._build(timesteps, height, width,
                                     len(self.classes_))
        if eval_set is not None:
            eval_frames = self._check_x(eval_set[0])
            eval_labels = np.asarray(
                [class_index[c] for c in np.asarray(eval_set[1])])
        else:
            eval_frames, eval_labels = frames, encoded
        settings = TrainSettings(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            receive_mode=self.receive_mode if self.channel_train else "clean")
        eval_link = self.channel_eval or self._zero_error_link()
        self.history_ = train_pipeline(
            self.pipeline_, frames.astype(np.float64), encoded,
            eval_frames.astype(np.float64), eval_labels,
            settings,
            self.channel_train or ChannelRandomization(),
            eval_link, self.random_state,
            log=print if self.verbose else None)
        return self

    def _zero_error_link(self):
        return LinkParams(pointing_variance=0.0, noise_floor=0.0)

    def _require_fitted(self):
        if not hasattr(self, "pipeline_"):
            raise NotFittedError(
                "this SplitSnnClassifier instance is not fitted yet")

    def decision_function(self, X) -> np.ndarray:
        """Class logits for each sample."""
        self._require_fitted()
        frames = self._check_x(X)
        link = self.channel_eval
        mode = self.receive_mode if link is not None else "clean"
        return evaluate_logits(
            self.pipeline_, frames.astype(np.float64), link,
            derive_rng(self.random_state, "predict"),
            receive_mode=mode, batch_size=self.batch_size)

    def predict(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        return self.classes_[logits.argmax(axis=1)]
