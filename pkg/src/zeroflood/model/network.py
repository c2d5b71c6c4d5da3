"""The desk-scale segmentation network.

Three pieces, mirroring the training strategy being modelled:

* FrozenEncoder - a seeded convolutional stack whose parameters are fixed at
  construction and never receive gradients. It stands in for a pre-trained
  backbone.
* TimExpander - one small trainable generator per imaginary modality, each
  mapping the shared features to extra channels that are concatenated onto
  them. An empty modality set is an exact identity.
* UNetDecoder - a small down/up convolutional decoder with skip connections
  producing one logit per pixel.

Feature maps are channel-last (N, H, W, C) float arrays throughout; the
public SegmentationNetwork entry points accept channel-first (N, C, H, W)
image batches and translate once on the way in.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, ValidationError
from .layers import Conv1x1, Conv3x3, MaxPool2, ReLU, UpsampleNearest2

MODALITIES = ("S1", "S2", "DEM", "LULC")


def canonical_modalities(modalities) -> tuple[str, ...]:
    """Normalize a modality collection to upper-case canonical names."""
    if modalities is None:
        return ()
    if isinstance(modalities, str):
        modalities = [m for m in modalities.split(",") if m.strip()]
    out = []
    for m in modalities:
        name = str(m).strip().upper()
        if name not in MODALITIES:
            raise ValidationError(f"unknown modality {m!r}, expected one of {MODALITIES}")
        if name in out:
            raise ValidationError(f"modality {name} listed twice")
        out.append(name)
    return tuple(out)


class FrozenEncoder:
    """Two seeded 3x3 conv + ReLU stages; parameters are never updated.

    Biases are drawn randomly too, so an all-zero input still produces a
    recognizable constant response.
    """

    def __init__(self, in_channels, base_channels, rng, dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = base_channels
        self.conv1 = Conv3x3(in_channels, base_channels, rng, name="encoder.conv1", dtype=dtype)
        self.conv1.bias.value[...] = rng.normal(0.0, 0.1, size=base_channels).astype(dtype)
        self.conv2 = Conv3x3(base_channels, base_channels, rng, name="encoder.conv2", dtype=dtype)
        self.conv2.bias.value[...] = rng.normal(0.0, 0.1, size=base_channels).astype(dtype)
        self._relu1 = ReLU()
        self._relu2 = ReLU()

    def parameters(self):
        return self.conv1.parameters() + self.conv2.parameters()

    def forward(self, x):
        if x.ndim != 4 or x.shape[-1] != self.in_channels:
            raise ShapeError(
                f"encoder expects (N, H, W, {self.in_channels}) input, got {x.shape}"
            )
        h = self._relu1.forward(self.conv1.forward(x))
        return self._relu2.forward(self.conv2.forward(h))


class _ModalityGenerator:
    """Trainable map from shared features to one imaginary modality's channels."""

    def __init__(self, modality, base_channels, out_channels, rng, dtype):
        self.modality = modality
        self.conv = Conv3x3(
            base_channels, out_channels, rng, name=f"tim.{modality.lower()}", dtype=dtype
        )
        self._relu = ReLU()

    def parameters(self):
        return self.conv.parameters()

    def forward(self, feats):
        return self._relu.forward(self.conv.forward(feats))

    def backward(self, dy):
        self.conv.backward(self._relu.backward(dy))


class TimExpander:
    """Append generated channels for each configured imaginary modality."""

    def __init__(self, base_channels, modalities, channels_per_modality, rng, dtype=np.float32):
        self.base_channels = base_channels
        self.modalities = canonical_modalities(modalities)
        self.channels_per_modality = channels_per_modality
        # Each generator is seeded by the modality it stands for, so the DEM
        # pathway has the same initialization whether it appears alone or in
        # a larger subset, and different modalities get different weights.
        base_seed = int(rng.integers(0, 2**32)) if self.modalities else 0
        self.generators = [
            _ModalityGenerator(
                m,
                base_channels,
                channels_per_modality,
                np.random.default_rng((base_seed, MODALITIES.index(m))),
                dtype,
            )
            for m in self.modalities
        ]

    @property
    def out_channels(self):
        return self.base_channels + len(self.modalities) * self.channels_per_modality

    def parameters(self):
        params = []
        for gen in self.generators:
            params.extend(gen.parameters())
        return params

    def forward(self, feats):
        if not self.generators:
            return feats
        chunks = [feats] + [gen.forward(feats) for gen in self.generators]
        return np.concatenate(chunks, axis=-1)

    def backward(self, dy):
        """Route the concatenated gradient into each generator.

        The gradient toward the shared features is dropped: the encoder that
        produced them is frozen.
        """
        offset = self.base_channels
        for gen in self.generators:
            gen.backward(dy[..., offset : offset + self.channels_per_modality])
            offset += self.channels_per_modality


class UNetDecoder:
    """Down/up convolutional decoder with skip connections.

    Each of the `depth` down levels is conv+ReLU followed by 2x max pooling
    (skip saved before pooling); channel width doubles per level starting
    from `width`. The up path mirrors it with nearest upsampling and skip
    concatenation, and a 1x1 conv head emits one logit channel.
    """

    def __init__(self, in_channels, width, depth, rng, dtype=np.float32):
        if depth < 0:
            raise ValidationError(f"decoder depth must be >= 0, got {depth}")
        self.in_channels = in_channels
        self.depth = depth
        self.down = []
        channels = in_channels
        for i in range(depth):
            self.down.append(Conv3x3(channels, width * 2**i, rng, name=f"decoder.down{i}", dtype=dtype))
            channels = width * 2**i
        self.bottleneck = Conv3x3(channels, width * 2**depth, rng, name="decoder.bottleneck", dtype=dtype)
        self.up = []
        for i in reversed(range(depth)):
            self.up.append(
                Conv3x3(width * 2 ** (i + 1) + width * 2**i, width * 2**i, rng,
                        name=f"decoder.up{i}", dtype=dtype)
            )
        head_in = width if depth > 0 else width * 2**depth
        self.head = Conv1x1(head_in, 1, rng, name="decoder.head", dtype=dtype)

        self._relus_down = [ReLU() for _ in range(depth)]
        self._relu_bottleneck = ReLU()
        self._relus_up = [ReLU() for _ in range(depth)]
        self._pools = [MaxPool2() for _ in range(depth)]
        self._upsamples = [UpsampleNearest2() for _ in range(depth)]
        self._skip_channels = None

    def parameters(self):
        params = []
        for conv in self.down:
            params.extend(conv.parameters())
        params.extend(self.bottleneck.parameters())
        for conv in self.up:
            params.extend(conv.parameters())
        params.extend(self.head.parameters())
        return params

    def forward(self, x):
        n, h, w, c = x.shape
        divisor = 2**self.depth
        if h % divisor or w % divisor:
            raise ShapeError(
                f"spatial dims {h}x{w} must be divisible by 2**depth = {divisor}"
            )
        skips = []
        for i in range(self.depth):
            x = self._relus_down[i].forward(self.down[i].forward(x))
            skips.append(x)
            x = self._pools[i].forward(x)
        x = self._relu_bottleneck.forward(self.bottleneck.forward(x))
        self._skip_channels = [s.shape[-1] for s in skips]
        for j, i in enumerate(reversed(range(self.depth))):
            x = self._upsamples[j].forward(x)
            x = np.concatenate([skips[i], x], axis=-1)
            x = self._relus_up[j].forward(self.up[j].forward(x))
        return self.head.forward(x)

    def backward(self, dlogits):
        dx = self.head.backward(dlogits)
        dskips = [None] * self.depth
        # Undo the up path in reverse: step j consumed skip level depth-1-j.
        for j in reversed(range(self.depth)):
            i = self.depth - 1 - j
            dx = self._relus_up[j].backward(dx)
            dx = self.up[j].backward(dx)
            split = self._skip_channels[i]
            dskips[i] = dx[..., :split]
            dx = self._upsamples[j].backward(dx[..., split:])
        dx = self.bottleneck.backward(self._relu_bottleneck.backward(dx))
        for i in reversed(range(self.depth)):
            dx = self._pools[i].backward(dx)
            dx = dx + dskips[i]
            dx = self.down[i].backward(self._relus_down[i].backward(dx))
        return dx


class SegmentationNetwork:
    """Frozen encoder + TiM expansion + trainable decoder."""

    def __init__(
        self,
        in_channels,
        base_channels,
        tim_modalities,
        tim_channels_per_modality,
        decoder_depth,
        seed,
        dtype=np.float32,
    ):
        rng = np.random.default_rng(seed)
        self.encoder = FrozenEncoder(in_channels, base_channels, rng, dtype=dtype)
        self.tim = TimExpander(
            base_channels, tim_modalities, tim_channels_per_modality, rng, dtype=dtype
        )
        self.decoder = UNetDecoder(
            self.tim.out_channels, base_channels, decoder_depth, rng, dtype=dtype
        )

    def encode(self, x):
        """Frozen features for a channel-first (N, C, H, W) batch.

        The result is channel-last and safe to cache across epochs.
        """
        if x.ndim != 4:
            raise ShapeError(f"expected (N, C, H, W) input, got shape {x.shape}")
        return self.encoder.forward(np.ascontiguousarray(x.transpose(0, 2, 3, 1)))

    def head_forward(self, feats):
        return self.decoder.forward(self.tim.forward(feats))[..., 0]

    def head_backward(self, dlogits):
        dfeats = self.decoder.backward(dlogits[..., None])
        self.tim.backward(dfeats)

    def forward(self, x):
        """Logits for a batch of input windows, shape (N, H, W)."""
        return self.head_forward(self.encode(x))

    def trainable_parameters(self):
        return self.tim.parameters() + self.decoder.parameters()

    def all_parameters(self):
        return self.encoder.parameters() + self.tim.parameters() + self.decoder.parameters()

    def zero_grads(self):
        for p in self.trainable_parameters():
            p.grad[...] = 0.0
