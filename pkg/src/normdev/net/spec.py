"""Architecture description for the residual 3D convolutional regressor.

A network is: a stem convolution + ReLU, a sequence of residual stages, a
global average pool, and an affine map to a single continuous output. Depth,
channel widths and strides are configurable; two presets ship:

* ``"tiny"`` — stem 3x3x3, two stages of one block each; used by tests.
* ``"resnet34-3d"`` — stem 7x7x7 stride 2 and stage blocks [3, 4, 6, 3],
  the full-scale depth (1 stem + 32 stage convs + 1 affine = 34 weighted
  layers). Expressible but far too large for desk-scale runs.

All convolutions use zero padding ``kernel // 2`` except the 1x1x1 projection
shortcuts, which are unpadded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeError
from ..volume import FULL_SCALE_DIMS


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel: int
    stride: int


@dataclass(frozen=True)
class StageSpec:
    blocks: int
    channels: int
    stride: int  # spatial downsampling applied by the first block


@dataclass(frozen=True)
class NetSpec:
    input_dims: tuple[int, int, int]
    stem: ConvSpec
    stages: tuple[StageSpec, ...]

    def validate(self) -> None:
        if len(self.input_dims) != 3 or any(int(d) <= 0 for d in self.input_dims):
            raise ConfigError(f"input_dims must be 3 positive ints, got {self.input_dims}")
        for conv in (self.stem,):
            if conv.out_channels <= 0 or conv.kernel <= 0 or conv.stride <= 0:
                raise ConfigError(f"bad stem spec {conv}")
        if not self.stages:
            raise ConfigError("at least one stage is required")
        for st in self.stages:
            if st.blocks <= 0 or st.channels <= 0 or st.stride <= 0:
                raise ConfigError(f"bad stage spec {st}")
        # every layer must keep spatial size >= 1 and fit its padded input
        plan = build_plan(self)
        for layer in plan.convs:
            if any(o < 1 for o in layer.out_dims):
                raise ConfigError(
                    f"layer {layer.name} collapses spatial dims to {layer.out_dims}"
                )
            if any(layer.kernel > i + 2 * layer.pad for i in layer.in_dims):
                raise ConfigError(
                    f"layer {layer.name}: kernel {layer.kernel} exceeds padded input "
                    f"{layer.in_dims} (pad {layer.pad})"
                )

    def to_dict(self) -> dict:
        return {
            "input_dims": list(self.input_dims),
            "stem": {
                "out_channels": self.stem.out_channels,
                "kernel": self.stem.kernel,
                "stride": self.stem.stride,
            },
            "stages": [
                {"blocks": s.blocks, "channels": s.channels, "stride": s.stride}
                for s in self.stages
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "NetSpec":
        try:
            return NetSpec(
                input_dims=tuple(int(v) for v in d["input_dims"]),
                stem=ConvSpec(
                    out_channels=int(d["stem"]["out_channels"]),
                    kernel=int(d["stem"]["kernel"]),
                    stride=int(d["stem"]["stride"]),
                ),
                stages=tuple(
                    StageSpec(
                        blocks=int(s["blocks"]),
                        channels=int(s["channels"]),
                        stride=int(s["stride"]),
                    )
                    for s in d["stages"]
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed network spec: {exc}") from exc


PRESETS = {
    "tiny": dict(
        stem=ConvSpec(out_channels=4, kernel=3, stride=1),
        stages=(StageSpec(1, 4, 1), StageSpec(1, 8, 2)),
    ),
    "resnet34-3d": dict(
        stem=ConvSpec(out_channels=64, kernel=7, stride=2),
        stages=(
            StageSpec(3, 64, 1),
            StageSpec(4, 128, 2),
            StageSpec(6, 256, 2),
            StageSpec(3, 512, 2),
        ),
    ),
}


def make_spec(preset: str = "tiny", input_dims=None) -> NetSpec:
    if preset not in PRESETS:
        raise ConfigError(f"unknown net preset '{preset}' (have {sorted(PRESETS)})")
    if input_dims is None:
        input_dims = FULL_SCALE_DIMS if preset == "resnet34-3d" else (16, 16, 16)
    spec = NetSpec(
        input_dims=tuple(int(d) for d in input_dims),
        stem=PRESETS[preset]["stem"],
        stages=PRESETS[preset]["stages"],
    )
    spec.validate()
    return spec


def conv_out_dims(in_dims, kernel: int, stride: int, pad: int) -> tuple[int, int, int]:
    out = tuple((i + 2 * pad - kernel) // stride + 1 for i in in_dims)
    if any(o < 1 for o in out):
        raise ShapeError(
            f"convolution output collapses: in={tuple(in_dims)} kernel={kernel} "
            f"stride={stride} pad={pad}"
        )
    return out


@dataclass(frozen=True)
class ConvPlan:
    name: str
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    pad: int
    in_dims: tuple[int, int, int]
    out_dims: tuple[int, int, int]


@dataclass(frozen=True)
class BlockPlan:
    name: str
    conv1: ConvPlan
    conv2: ConvPlan
    projection: ConvPlan | None  # 1x1x1 shortcut when channels/stride change


@dataclass(frozen=True)
class ParamField:
    name: str
    shape: tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass
class NetPlan:
    spec: NetSpec
    stem: ConvPlan
    blocks: list[BlockPlan]
    head_channels: int
    fields: list[ParamField] = field(default_factory=list)

    @property
    def convs(self):
        out = [self.stem]
        for b in self.blocks:
            out.extend([b.conv1, b.conv2] + ([b.projection] if b.projection else []))
        return out

    @property
    def n_params(self) -> int:
        last = self.fields[-1]
        return last.offset + last.size

    def field_map(self) -> dict:
        return {f.name: f for f in self.fields}


def _conv_plan(name, in_channels, conv: ConvSpec, in_dims, pad=None) -> ConvPlan:
    pad = conv.kernel // 2 if pad is None else pad
    out_dims = tuple(
        (i + 2 * pad - conv.kernel) // conv.stride + 1 for i in in_dims
    )
    return ConvPlan(
        name=name,
        in_channels=in_channels,
        out_channels=conv.out_channels,
        kernel=conv.kernel,
        stride=conv.stride,
        pad=pad,
        in_dims=tuple(in_dims),
        out_dims=out_dims,
    )


def build_plan(spec: NetSpec) -> NetPlan:
    """Lay out every weighted layer and assign flat parameter offsets."""
    stem = _conv_plan("stem", 1, spec.stem, spec.input_dims)
    blocks: list[BlockPlan] = []
    channels = spec.stem.out_channels
    dims = stem.out_dims
    for si, stage in enumerate(spec.stages, start=1):
        for bi in range(1, stage.blocks + 1):
            first = bi == 1
            stride = stage.stride if first else 1
            name = f"stage{si}.block{bi}"
            conv1 = _conv_plan(
                f"{name}.conv1", channels, ConvSpec(stage.channels, 3, stride), dims
            )
            conv2 = _conv_plan(
                f"{name}.conv2", stage.channels, ConvSpec(stage.channels, 3, 1), conv1.out_dims
            )
            projection = None
            if channels != stage.channels or stride != 1:
                projection = _conv_plan(
                    f"{name}.proj", channels, ConvSpec(stage.channels, 1, stride), dims, pad=0
                )
            blocks.append(BlockPlan(name=name, conv1=conv1, conv2=conv2, projection=projection))
            channels = stage.channels
            dims = conv2.out_dims
    plan = NetPlan(spec=spec, stem=stem, blocks=blocks, head_channels=channels)

    offset = 0
    for conv in plan.convs:
        w_shape = (conv.out_channels, conv.in_channels, conv.kernel, conv.kernel, conv.kernel)
        plan.fields.append(ParamField(f"{conv.name}.w", w_shape, offset))
        offset += int(np.prod(w_shape))
        plan.fields.append(ParamField(f"{conv.name}.b", (conv.out_channels,), offset))
        offset += conv.out_channels
    plan.fields.append(ParamField("head.w", (channels,), offset))
    offset += channels
    plan.fields.append(ParamField("head.b", (1,), offset))
    return plan
