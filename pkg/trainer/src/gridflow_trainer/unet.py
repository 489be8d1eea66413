"""U-Net over grid feature tensors.

Five resolution levels by default: channels double on the way down, halve on
the way up through transposed convolutions, and the head emits one logit per
action class. Spatial dimensions are preserved end to end, so one weight set
handles any input whose sides are divisible by 2^(levels - 1).
"""

from dataclasses import dataclass, field

import torch
from torch import nn


@dataclass(frozen=True)
class UNetSpec:
    levels: int = 5
    base_channels: int = 64
    in_channels: int = 6
    out_channels: int = 5

    @property
    def multiple(self) -> int:
        """Smallest side length the pooling stack divides evenly."""
        return 2 ** (self.levels - 1)

    @property
    def channels(self) -> list:
        return [self.base_channels * 2**i for i in range(self.levels)]


def _block(cin: int, cout: int) -> nn.Sequential:
    """Two 3x3 convolutions with group norm; the workhorse at every level."""
    groups = min(8, cout)
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1),
        nn.GroupNorm(groups, cout),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1),
        nn.GroupNorm(groups, cout),
        nn.ReLU(inplace=True),
    )


class UNet(nn.Module):
    def __init__(self, spec: UNetSpec | None = None):
        super().__init__()
        self.spec = spec or UNetSpec()
        ch = self.spec.channels
        self.encoders = nn.ModuleList()
        cin = self.spec.in_channels
        for cout in ch[:-1]:
            self.encoders.append(_block(cin, cout))
            cin = cout
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = _block(ch[-2], ch[-1])
        self.upsamplers = nn.ModuleList(
            nn.ConvTranspose2d(ch[i], ch[i - 1], kernel_size=2, stride=2)
            for i in range(self.spec.levels - 1, 0, -1)
        )
        self.decoders = nn.ModuleList(
            _block(ch[i], ch[i - 1]) for i in range(self.spec.levels - 1, 0, -1)
        )
        self.head = nn.Conv2d(ch[0], self.spec.out_channels, 1)

    def forward(self, x):
        h, w = x.shape[-2], x.shape[-1]
        m = self.spec.multiple
        if h % m or w % m:
            raise ValueError(f"input {h}x{w} not divisible by {m}; pad first")
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.upsamplers, self.decoders, reversed(skips)):
            x = dec(torch.cat([skip, up(x)], dim=1))
        return self.head(x)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


@dataclass
class ShapeReport:
    ok: bool
    first_violation: str | None = None
    trace: list = field(default_factory=list)


def shape_check(spec: UNetSpec, height: int, width: int, seed: int = 0) -> ShapeReport:
    """Walk a random input through a fresh model and audit every stage.

    Checks that each encoder level halves the spatial dims and doubles the
    channels, that the decoder mirrors the encoder back up, and that the
    output is (height, width, out_channels). The first violating stage is
    named in the report.
    """
    report = ShapeReport(ok=True)

    def expect(stage, tensor, channels, h, w):
        got = tuple(tensor.shape[1:])
        report.trace.append(f"{stage}: {got}")
        if got != (channels, h, w) and report.ok:
            report.ok = False
            report.first_violation = f"{stage}: expected {(channels, h, w)}, got {got}"

    model = UNet(spec)
    model.eval()
    m = spec.multiple
    if height % m or width % m:
        return ShapeReport(False, f"input {height}x{width} not divisible by {m}")
    gen = torch.Generator().manual_seed(seed)
    x = torch.randn(1, spec.in_channels, height, width, generator=gen)
    ch = spec.channels
    h, w = height, width
    with torch.no_grad():
        skips = []
        for i, enc in enumerate(model.encoders):
            x = enc(x)
            expect(f"encoder{i}", x, ch[i], h, w)
            skips.append(x)
            x = model.pool(x)
            h, w = h // 2, w // 2
            expect(f"pool{i}", x, ch[i], h, w)
        x = model.bottleneck(x)
        expect("bottleneck", x, ch[-1], h, w)
        for i, (up, dec, skip) in enumerate(
            zip(model.upsamplers, model.decoders, reversed(skips))
        ):
            x = up(x)
            h, w = h * 2, w * 2
            level = spec.levels - 2 - i
            expect(f"up{i}", x, ch[level], h, w)
            x = dec(torch.cat([skip, x], dim=1))
            expect(f"decoder{i}", x, ch[level], h, w)
        x = model.head(x)
        expect("head", x, spec.out_channels, height, width)
    return report
