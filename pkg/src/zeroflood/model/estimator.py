"""Scikit-learn style segmentation estimator.

FloodSegmenter follows the usual estimator conventions: constructor arguments
are stored untouched (so get_params/set_params/clone compose with the wider
ecosystem), validation happens in fit, and fitted state lives in trailing
underscore attributes. Inputs are (N, C, H, W) arrays of image windows with
(N, H, W) boolean target masks.

Training is plain full-batch gradient descent with a fixed learning rate and
early stopping on validation loss; the encoder stays frozen throughout, so
its features are computed once per dataset and reused every epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..errors import ShapeError, TrainingDivergedError, ValidationError
from ..metrics import BinaryMask
from .losses import focal_loss, focal_loss_with_grad, sigmoid
from .network import MODALITIES, SegmentationNetwork, canonical_modalities


@dataclass
class TrainState:
    """Per-epoch loss histories and the best-checkpoint bookkeeping.

    Epochs are 1-based; history index i holds epoch i + 1. best_epoch is the
    earliest epoch attaining the minimum validation loss, and best_params
    snapshots the trainable parameters at that epoch.
    """

    epoch: int = 0
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    best_params: dict = field(default_factory=dict)


class EarlyStopping:
    """Stop after `patience` consecutive epochs without a new best value."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValidationError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best_value = None
        self.best_epoch = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record this epoch's value; return True when training should stop."""
        if self.best_value is None or value < self.best_value:
            self.best_value = value
            self.best_epoch = epoch
            return False
        return epoch - self.best_epoch >= self.patience


def _check_images(X, in_channels, depth, name="X"):
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 4:
        raise ShapeError(f"{name} must be (N, C, H, W), got shape {X.shape}")
    n, c, h, w = X.shape
    if n == 0:
        raise ValidationError(f"{name} is empty")
    if c != in_channels:
        raise ShapeError(f"{name} has {c} channels, expected {in_channels}")
    divisor = 2**depth
    if h % divisor or w % divisor:
        raise ShapeError(
            f"{name} spatial dims {h}x{w} must be divisible by 2**decoder_depth = {divisor}"
        )
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"{name} contains non-finite values")
    return X


def _check_targets(y, X, name="y"):
    y = np.asarray(y)
    expected = (X.shape[0], X.shape[2], X.shape[3])
    if y.shape != expected:
        raise ShapeError(f"{name} shape {y.shape} does not match images {expected}")
    return y.astype(bool)


def _check_valid(valid, X, name="valid"):
    if valid is None:
        return None
    valid = np.asarray(valid).astype(bool)
    expected = (X.shape[0], X.shape[2], X.shape[3])
    if valid.shape != expected:
        raise ShapeError(f"{name} shape {valid.shape} does not match images {expected}")
    return valid


class FloodSegmenter(BaseEstimator):
    """Frozen-encoder pixel segmenter with imaginary-modality expansion.

    Parameters
    ----------
    in_channels : channels per input window.
    base_channels : width of the frozen encoder's feature map (and of the
        first decoder level).
    input_modality : name of the modality the input windows come from; it
        must not appear in tim_modalities.
    tim_modalities : ordered subset of {"S1", "S2", "DEM", "LULC"} to
        generate as extra feature channels.
    tim_channels_per_modality : channels appended per generated modality.
    decoder_depth : number of down/up levels in the decoder.
    focal_gamma, focal_alpha : focal-loss shape parameters.
    learning_rate : fixed step size for gradient descent.
    max_epochs : hard cap on training epochs.
    patience : early-stopping patience on validation loss.
    seed : seed for all parameter initialization.
    """

    def __init__(
        self,
        in_channels=1,
        base_channels=8,
        input_modality="S1",
        tim_modalities=(),
        tim_channels_per_modality=8,
        decoder_depth=2,
        focal_gamma=2.0,
        focal_alpha=0.25,
        learning_rate=1.0,
        max_epochs=120,
        patience=20,
        seed=0,
    ):
        self.in_channels = in_channels
        self.base_channels = base_channels
        self.input_modality = input_modality
        self.tim_modalities = tim_modalities
        self.tim_channels_per_modality = tim_channels_per_modality
        self.decoder_depth = decoder_depth
        self.focal_gamma = focal_gamma
        self.focal_alpha = focal_alpha
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed

    # -- validation ---------------------------------------------------------

    def _validated_params(self):
        mods = canonical_modalities(self.tim_modalities)
        input_mod = str(self.input_modality).strip().upper()
        if input_mod not in MODALITIES:
            raise ValidationError(
                f"unknown input modality {self.input_modality!r}, expected one of {MODALITIES}"
            )
        if input_mod in mods:
            raise ValidationError(
                f"input modality {input_mod} cannot also be an imaginary modality"
            )
        if self.in_channels < 1 or self.base_channels < 1:
            raise ValidationError("in_channels and base_channels must be >= 1")
        if self.tim_channels_per_modality < 1:
            raise ValidationError("tim_channels_per_modality must be >= 1")
        if self.decoder_depth < 0:
            raise ValidationError("decoder_depth must be >= 0")
        if self.focal_gamma < 0:
            raise ValidationError("focal_gamma must be >= 0")
        if not 0 < self.focal_alpha <= 1:
            raise ValidationError("focal_alpha must be in (0, 1]")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be >= 1")
        return mods

    def _build_network(self, modalities):
        return SegmentationNetwork(
            in_channels=self.in_channels,
            base_channels=self.base_channels,
            tim_modalities=modalities,
            tim_channels_per_modality=self.tim_channels_per_modality,
            decoder_depth=self.decoder_depth,
            seed=self.seed,
        )

    # -- training -----------------------------------------------------------

    def fit(self, X, y, X_val=None, y_val=None, valid=None, valid_val=None):
        """Train the decoder and modality generators; the encoder stays fixed.

        A validation set is required: it drives early stopping and selects
        the returned parameters (earliest minimum of the validation loss).
        """
        modalities = self._validated_params()
        if X_val is None or y_val is None:
            raise ValidationError("fit requires a validation set (X_val, y_val)")
        X = _check_images(X, self.in_channels, self.decoder_depth, "X")
        y = _check_targets(y, X, "y")
        valid = _check_valid(valid, X, "valid")
        X_val = _check_images(X_val, self.in_channels, self.decoder_depth, "X_val")
        y_val = _check_targets(y_val, X_val, "y_val")
        valid_val = _check_valid(valid_val, X_val, "valid_val")

        # Standardize per channel from training statistics; the same affine
        # map is applied at prediction time, keeping the fixed learning rate
        # meaningful across input scales.
        self.input_mean_ = X.mean(axis=(0, 2, 3)).astype(np.float32)
        self.input_scale_ = np.maximum(X.std(axis=(0, 2, 3)), 1e-6).astype(np.float32)

        net = self._build_network(modalities)
        feats_train = net.encode(self._normalize(X))
        feats_val = net.encode(self._normalize(X_val))

        params = net.trainable_parameters()
        stopper = EarlyStopping(self.patience)
        state = TrainState()
        best_snapshot = None

        for epoch in range(1, self.max_epochs + 1):
            # Overflow here just means divergence, which the finiteness
            # checks turn into a proper error; keep the warnings quiet.
            with np.errstate(over="ignore", invalid="ignore"):
                logits = net.head_forward(feats_train)
                loss, dlogits = focal_loss_with_grad(
                    logits, y, self.focal_gamma, self.focal_alpha, valid
                )
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            net.zero_grads()
            net.head_backward(dlogits)
            for p in params:
                p.value -= self.learning_rate * p.grad

            with np.errstate(over="ignore", invalid="ignore"):
                val_logits = net.head_forward(feats_val)
                val_loss = focal_loss(
                    val_logits, y_val, self.focal_gamma, self.focal_alpha, valid_val
                )
            if not np.isfinite(val_loss):
                raise TrainingDivergedError(epoch)

            state.train_loss.append(loss)
            state.val_loss.append(val_loss)
            state.epoch = epoch
            stop = stopper.update(epoch, val_loss)
            if stopper.best_epoch == epoch:
                best_snapshot = {p.name: p.value.copy() for p in params}
            if stop:
                break

        state.best_epoch = stopper.best_epoch
        state.best_params = best_snapshot
        for p in params:
            p.value[...] = best_snapshot[p.name]

        self.network_ = net
        self.modalities_ = modalities
        self.train_state_ = state
        self.n_features_in_ = self.in_channels
        return self

    # -- inference ----------------------------------------------------------

    def _normalize(self, X):
        return (X - self.input_mean_[:, None, None]) / self.input_scale_[:, None, None]

    def decision_function(self, X):
        """Per-pixel flood logits, shape (N, H, W)."""
        check_is_fitted(self, "network_")
        X = _check_images(X, self.in_channels, self.decoder_depth, "X")
        return self.network_.forward(self._normalize(X))

    def predict_proba(self, X):
        """Per-pixel flood probabilities, shape (N, H, W)."""
        return sigmoid(self.decision_function(X))

    def predict(self, X, threshold: float = 0.5):
        """Boolean flood masks, shape (N, H, W)."""
        return self.predict_proba(X) >= threshold

    def predict_tiled(self, image, tile: int = 64, overlap: int = 16, threshold: float = 0.5) -> BinaryMask:
        """Predict one large (C, H, W) image by overlapping tiles.

        Logits are averaged where tiles overlap, then converted to
        probabilities and thresholded. An image smaller than the tile is
        predicted in a single window.
        """
        check_is_fitted(self, "network_")
        image = np.asarray(image, dtype=np.float32)
        if image.ndim != 3 or image.shape[0] != self.in_channels:
            raise ShapeError(
                f"expected ({self.in_channels}, H, W) image, got shape {image.shape}"
            )
        if overlap < 0 or tile <= overlap:
            raise ValidationError(f"need tile > overlap >= 0, got tile={tile} overlap={overlap}")
        image = self._normalize(image[None])[0]
        _, h, w = image.shape

        logit_sum = np.zeros((h, w), dtype=np.float64)
        hits = np.zeros((h, w), dtype=np.int64)
        stride = tile - overlap
        for r0 in _tile_starts(h, tile, stride):
            for c0 in _tile_starts(w, tile, stride):
                r1 = min(r0 + tile, h)
                c1 = min(c0 + tile, w)
                window = image[:, r0:r1, c0:c1]
                logit_sum[r0:r1, c0:c1] += self._window_logits(window)
                hits[r0:r1, c0:c1] += 1
        proba = sigmoid(logit_sum / hits)
        return BinaryMask(proba >= threshold)

    def _window_logits(self, window):
        """Logits for one (C, h, w) window, padding to the decoder's grid."""
        _, h, w = window.shape
        divisor = 2**self.decoder_depth
        pad_h = (-h) % divisor
        pad_w = (-w) % divisor
        if pad_h or pad_w:
            window = np.pad(window, ((0, 0), (0, pad_h), (0, pad_w)), mode="edge")
        logits = self.network_.forward(window[None]).astype(np.float64)
        return logits[0, :h, :w]

    def score(self, X, y):
        """Micro F1 (0-1 scale) of thresholded predictions against y."""
        from ..metrics import ConfusionCounts, f1_from, hit_rate, true_alarm_rate

        pred = self.predict(X)
        y = _check_targets(y, np.asarray(X, dtype=np.float32), "y")
        tp = int(np.count_nonzero(pred & y))
        fp = int(np.count_nonzero(pred & ~y))
        fn = int(np.count_nonzero(~pred & y))
        tn = y.size - tp - fp - fn
        c = ConfusionCounts(tp, fp, fn, tn)
        f1 = f1_from(hit_rate(c), true_alarm_rate(c))
        return 0.0 if f1 is None else f1 / 100.0


def _tile_starts(length: int, tile: int, stride: int) -> list[int]:
    """Start offsets covering [0, length) with the last tile clamped inside."""
    if length <= tile:
        return [0]
    starts = list(range(0, length - tile + 1, stride))
    if starts[-1] != length - tile:
        starts.append(length - tile)
    return starts
