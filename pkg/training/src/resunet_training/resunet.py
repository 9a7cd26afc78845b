"""Residual UNet for single-channel image-to-image restoration.

The network is a symmetric encoder-decoder. Each encoder level applies
two convolutions with ReLU and halves the resolution with max pooling;
the decoder mirrors it with nearest-neighbor upsampling followed by a
convolution, an element-wise additive skip from the matching encoder
level, and two more convolutions. A global residual path adds the input
to the final convolution output, so a network with all-zero weights is
exactly the identity map.
"""

from dataclasses import dataclass

import torch
from torch import nn


@dataclass(frozen=True)
class ResUNetSpec:
    """Architecture hyperparameters.

    levels: number of pooling steps L; the input side must be divisible
    by 2**levels. base_width: channel count at the finest level, doubled
    at each coarser level. kernel_size: odd convolution kernel side.
    """

    levels: int = 3
    base_width: int = 64
    kernel_size: int = 3

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.base_width < 1:
            raise ValueError(f"base_width must be >= 1, got {self.base_width}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(
                f"kernel_size must be odd and positive, got {self.kernel_size}"
            )

    @property
    def widths(self):
        """Channel widths per level, finest first; the last entry is the
        bottom of the encoder."""
        return [self.base_width * 2 ** l for l in range(self.levels + 1)]


def _conv(c_in, c_out, k):
    return nn.Conv2d(c_in, c_out, kernel_size=k, padding=k // 2)


class ResUNet(nn.Module):
    def __init__(self, spec: ResUNetSpec = ResUNetSpec()):
        super().__init__()
        self.spec = spec
        k = spec.kernel_size
        w = spec.widths

        self.enc_a = nn.ModuleList()
        self.enc_b = nn.ModuleList()
        c_in = 1
        for l in range(spec.levels):
            self.enc_a.append(_conv(c_in, w[l], k))
            self.enc_b.append(_conv(w[l], w[l], k))
            c_in = w[l]
        self.bottom_a = _conv(w[spec.levels - 1], w[spec.levels], k)
        self.bottom_b = _conv(w[spec.levels], w[spec.levels], k)

        self.up = nn.ModuleList()
        self.dec_a = nn.ModuleList()
        self.dec_b = nn.ModuleList()
        for l in range(spec.levels - 1, -1, -1):
            self.up.append(_conv(w[l + 1], w[l], k))
            self.dec_a.append(_conv(w[l], w[l], k))
            self.dec_b.append(_conv(w[l], w[l], k))
        self.head = _conv(w[0], 1, k)
        self.pool = nn.MaxPool2d(2, 2)

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected (batch, 1, side, side), got {tuple(x.shape)}")
        factor = 2 ** self.spec.levels
        if x.shape[2] % factor or x.shape[3] % factor:
            raise ValueError(
                f"side {x.shape[2]}x{x.shape[3]} is not divisible by {factor}"
            )
        skips = []
        t = x
        for conv_a, conv_b in zip(self.enc_a, self.enc_b):
            t = torch.relu(conv_a(t))
            t = torch.relu(conv_b(t))
            skips.append(t)
            t = self.pool(t)
        t = torch.relu(self.bottom_a(t))
        t = torch.relu(self.bottom_b(t))
        for i, (up, conv_a, conv_b) in enumerate(zip(self.up, self.dec_a,
                                                     self.dec_b)):
            t = nn.functional.interpolate(t, scale_factor=2, mode="nearest")
            t = torch.relu(up(t))
            t = t + skips[-(i + 1)]
            t = torch.relu(conv_a(t))
            t = torch.relu(conv_b(t))
        return x + self.head(t)


def build_resunet(spec: ResUNetSpec = ResUNetSpec()) -> ResUNet:
    """Construct a ResUNet from its spec."""
    return ResUNet(spec)
