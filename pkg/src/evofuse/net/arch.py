"""Declarative micro-architecture descriptions and analytic cost counting.

A spec has three stages: ``alpha`` (first conv block), ``beta`` (the
replaceable middle module) and ``gamma`` (last conv). When ``residual``
is set, the beta output is added to its input before gamma, and a sigmoid
caps the final output to (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..errors import IoError, SpecError

FEATURE_CHANNELS = 64
DEFAULT_GROUPS = 8


@dataclass(frozen=True)
class ConvBlock:
    cin: int
    cout: int
    k: int
    groups: int = 1
    stride: int = 1


@dataclass(frozen=True)
class ChannelShuffle:
    groups: int


@dataclass(frozen=True)
class BatchNorm:
    channels: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class SeparableConv:
    """Depthwise k x k followed by pointwise 1x1."""

    cin: int
    cout: int
    k: int


@dataclass(frozen=True)
class Fire:
    """1x1 squeeze then parallel 1x1/3x3 expands, concatenated."""

    cin: int
    squeeze: int
    expand1: int
    expand3: int


@dataclass(frozen=True)
class Inception:
    """Parallel 1x1/3x3/5x5 branches, concatenated; branches may be grouped."""

    cin: int
    b1: int
    b3: int
    b5: int
    groups: int = 1


@dataclass(frozen=True)
class MaxPool2:
    pass


@dataclass(frozen=True)
class UpsampleNearest2:
    pass


@dataclass(frozen=True)
class SkipConcat:
    """Concatenate the output of an earlier block in the same stage."""

    source: int


Block = (
    ConvBlock
    | ChannelShuffle
    | BatchNorm
    | ReLU
    | SeparableConv
    | Fire
    | Inception
    | MaxPool2
    | UpsampleNearest2
    | SkipConcat
)


@dataclass(frozen=True)
class ArchSpec:
    name: str
    in_channels: int
    out_channels: int
    alpha: tuple
    beta: tuple
    gamma: tuple
    residual: bool = True

    def __post_init__(self):
        validate_spec(self)

    @property
    def stages(self) -> tuple[tuple, tuple, tuple]:
        return (self.alpha, self.beta, self.gamma)


def _block_out_channels(blk, cin: int, outs: list[int], index: int) -> int:
    if isinstance(blk, ConvBlock):
        if blk.cin != cin:
            raise SpecError(f"block {index}: conv expects cin={blk.cin}, chain gives {cin}")
        if blk.cin % blk.groups or blk.cout % blk.groups:
            raise SpecError(
                f"block {index}: groups={blk.groups} must divide cin={blk.cin} and cout={blk.cout}"
            )
        if blk.k % 2 == 0:
            raise SpecError(f"block {index}: even kernel {blk.k}")
        return blk.cout
    if isinstance(blk, SeparableConv):
        if blk.cin != cin:
            raise SpecError(f"block {index}: separable expects cin={blk.cin}, chain gives {cin}")
        return blk.cout
    if isinstance(blk, Fire):
        if blk.cin != cin:
            raise SpecError(f"block {index}: fire expects cin={blk.cin}, chain gives {cin}")
        if blk.squeeze >= blk.expand1 + blk.expand3:
            raise SpecError(f"block {index}: squeeze must be < expand total")
        return blk.expand1 + blk.expand3
    if isinstance(blk, Inception):
        if blk.cin != cin:
            raise SpecError(f"block {index}: inception expects cin={blk.cin}, chain gives {cin}")
        for width in (blk.b1, blk.b3, blk.b5):
            if blk.cin % blk.groups or width % blk.groups:
                raise SpecError(f"block {index}: groups={blk.groups} must divide branch widths")
        return blk.b1 + blk.b3 + blk.b5
    if isinstance(blk, ChannelShuffle):
        if cin % blk.groups:
            raise SpecError(f"block {index}: shuffle groups={blk.groups} must divide {cin}")
        return cin
    if isinstance(blk, BatchNorm):
        if blk.channels != cin:
            raise SpecError(f"block {index}: BN sized {blk.channels}, chain gives {cin}")
        return cin
    if isinstance(blk, SkipConcat):
        if not 0 <= blk.source < index:
            raise SpecError(f"block {index}: skip source {blk.source} out of range")
        return cin + outs[blk.source]
    if isinstance(blk, (ReLU, MaxPool2, UpsampleNearest2)):
        return cin
    raise SpecError(f"unknown block type {type(blk).__name__}")


def _stage_channels(blocks, cin: int) -> tuple[int, list[int]]:
    outs: list[int] = []
    for i, blk in enumerate(blocks):
        cin = _block_out_channels(blk, cin, outs, i)
        outs.append(cin)
    return cin, outs


def validate_spec(spec: ArchSpec) -> None:
    """Channel arithmetic must chain across all three stages."""
    c, _ = _stage_channels(spec.alpha, spec.in_channels)
    beta_out, _ = _stage_channels(spec.beta, c)
    if spec.residual and beta_out != c:
        raise SpecError(
            f"residual spec needs beta out ({beta_out}) == alpha out ({c})"
        )
    final, _ = _stage_channels(spec.gamma, beta_out if not spec.residual else c)
    if final != spec.out_channels:
        raise SpecError(f"gamma produces {final} channels, spec says {spec.out_channels}")


# ---------------------------------------------------------------------------
# Built-in variants
# ---------------------------------------------------------------------------

BUILTIN_NAMES = (
    "regular",
    "gcb",
    "separable",
    "squeeze",
    "inception",
    "gcb_inception",
    "squeeze_gcb",
    "squeeze2_gcb",
    "m",
)

POOLED_NAMES = ("m",)


def builtin_spec(name: str, in_channels: int = 2, groups: int = DEFAULT_GROUPS) -> ArchSpec:
    """Named architecture variants; all share the conv-BN-relu head and a
    single-conv tail, differing only in the replaceable middle module."""
    c = FEATURE_CHANNELS
    alpha = (ConvBlock(in_channels, c, 3), BatchNorm(c), ReLU())
    gamma = (ConvBlock(c, 1, 3),)
    gc = (ConvBlock(c, c, 3, groups=groups), ChannelShuffle(groups), BatchNorm(c), ReLU())
    fire = (Fire(c, 16, 32, 32), BatchNorm(c), ReLU())
    middles = {
        "regular": (ConvBlock(c, c, 3), BatchNorm(c), ReLU()),
        "gcb": gc,
        "separable": (SeparableConv(c, c, 3), BatchNorm(c), ReLU()),
        "squeeze": fire,
        "inception": (Inception(c, 16, 32, 16), BatchNorm(c), ReLU()),
        "gcb_inception": (
            Inception(c, 16, 32, 16, groups=groups),
            ChannelShuffle(groups),
            BatchNorm(c),
            ReLU(),
        ),
        "squeeze_gcb": fire + gc,
        "squeeze2_gcb": fire + fire + gc,
        "m": (
            ConvBlock(c, c, 3),          # 0 encoder 1
            BatchNorm(c),                # 1
            ReLU(),                      # 2
            MaxPool2(),                  # 3  -> 1/2
            ConvBlock(c, c, 3),          # 4 encoder 2
            BatchNorm(c),                # 5
            ReLU(),                      # 6
            MaxPool2(),                  # 7  -> 1/4
            Fire(c, 16, 32, 32),         # 8 bottleneck
            BatchNorm(c),                # 9
            ReLU(),                      # 10
            UpsampleNearest2(),          # 11 -> 1/2
            SkipConcat(6),               # 12 cat encoder 2
            ConvBlock(2 * c, c, 3),      # 13
            BatchNorm(c),                # 14
            ReLU(),                      # 15
            UpsampleNearest2(),          # 16 -> 1/1
            SkipConcat(2),               # 17 cat encoder 1
            ConvBlock(2 * c, c, 3),      # 18
            BatchNorm(c),                # 19
            ReLU(),                      # 20
        ),
    }
    if name not in middles:
        raise SpecError(f"unknown built-in spec {name!r}; options: {BUILTIN_NAMES}")
    return ArchSpec(name, in_channels, 1, alpha, middles[name], gamma)


# ---------------------------------------------------------------------------
# Analytic parameter and FLOP counting
# ---------------------------------------------------------------------------


def _block_param_counts(blk) -> tuple[int, int]:
    """(trainable, non-trainable running stats) for one block."""
    if isinstance(blk, ConvBlock):
        return blk.cout * (blk.cin // blk.groups) * blk.k * blk.k + blk.cout, 0
    if isinstance(blk, SeparableConv):
        dw = blk.cin * blk.k * blk.k + blk.cin
        pw = blk.cin * blk.cout + blk.cout
        return dw + pw, 0
    if isinstance(blk, Fire):
        sq = blk.cin * blk.squeeze + blk.squeeze
        e1 = blk.squeeze * blk.expand1 + blk.expand1
        e3 = blk.squeeze * blk.expand3 * 9 + blk.expand3
        return sq + e1 + e3, 0
    if isinstance(blk, Inception):
        b1 = blk.cin * blk.b1 // blk.groups + blk.b1
        b3 = blk.cin * blk.b3 * 9 // blk.groups + blk.b3
        b5 = blk.cin * blk.b5 * 25 // blk.groups + blk.b5
        return b1 + b3 + b5, 0
    if isinstance(blk, BatchNorm):
        return 2 * blk.channels, 2 * blk.channels
    return 0, 0


def count_params(spec: ArchSpec) -> int:
    """Trainable parameter count (conv weights/biases + BN scale/shift)."""
    return sum(_block_param_counts(b)[0] for stage in spec.stages for b in stage)


def count_state(spec: ArchSpec) -> tuple[int, int]:
    """(trainable, non-trainable) parameter counts."""
    trainable = 0
    running = 0
    for stage in spec.stages:
        for blk in stage:
            t, r = _block_param_counts(blk)
            trainable += t
            running += r
    return trainable, running


def _conv_macs(cout, cin, k, groups, h, w) -> int:
    return cout * (cin // groups) * k * k * h * w


def count_flops(spec: ArchSpec, h: int, w: int) -> int:
    """FLOPs at input h x w with the 1 MAC = 2 FLOPs convention.

    Pooling, shuffling, ReLU and BN count as zero MACs.
    """
    macs = 0
    cin = spec.in_channels
    for si, stage in enumerate(spec.stages):
        outs: list[int] = []
        spatial: list[tuple[int, int]] = []
        for i, blk in enumerate(stage):
            if isinstance(blk, ConvBlock):
                h = (h - 1) // blk.stride + 1
                w = (w - 1) // blk.stride + 1
                macs += _conv_macs(blk.cout, blk.cin, blk.k, blk.groups, h, w)
            elif isinstance(blk, SeparableConv):
                macs += _conv_macs(blk.cin, 1, blk.k, 1, h, w)  # depthwise
                macs += _conv_macs(blk.cout, blk.cin, 1, 1, h, w)  # pointwise
            elif isinstance(blk, Fire):
                macs += _conv_macs(blk.squeeze, blk.cin, 1, 1, h, w)
                macs += _conv_macs(blk.expand1, blk.squeeze, 1, 1, h, w)
                macs += _conv_macs(blk.expand3, blk.squeeze, 3, 1, h, w)
            elif isinstance(blk, Inception):
                macs += _conv_macs(blk.b1, blk.cin, 1, blk.groups, h, w)
                macs += _conv_macs(blk.b3, blk.cin, 3, blk.groups, h, w)
                macs += _conv_macs(blk.b5, blk.cin, 5, blk.groups, h, w)
            elif isinstance(blk, MaxPool2):
                h //= 2
                w //= 2
            elif isinstance(blk, UpsampleNearest2):
                h *= 2
                w *= 2
            cin = _block_out_channels(blk, cin, outs, i)
            outs.append(cin)
            spatial.append((h, w))
        if si == 1 and spec.residual:
            pass  # the residual add contributes no MACs
    return 2 * macs


# ---------------------------------------------------------------------------
# Line-oriented spec files: one block per line, three `stage` sections.
# ---------------------------------------------------------------------------


def parse_arch_file(path) -> ArchSpec:
    """Parse a text spec. Grammar (one entry per line, '#' comments)::

        name <str>            in_channels <int>      out_channels <int>
        residual <0|1>        stage alpha|beta|gamma
        conv <cin> <cout> <k> [groups] [stride]      sep  <cin> <cout> <k>
        fire <cin> <squeeze> <e1> <e3>               incep <cin> <b1> <b3> <b5> [groups]
        shuffle <g>           bn <c>      relu       pool        up
        cat <source-index>
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    name = Path(path).stem
    in_channels, out_channels, residual = 2, 1, True
    stages: dict[str, list] = {"alpha": [], "beta": [], "gamma": []}
    current: list | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        op, *args = line.split()
        try:
            if op == "name":
                name = args[0]
            elif op == "in_channels":
                in_channels = int(args[0])
            elif op == "out_channels":
                out_channels = int(args[0])
            elif op == "residual":
                residual = bool(int(args[0]))
            elif op == "stage":
                current = stages[args[0]]
            elif current is None:
                raise SpecError(f"line {lineno}: block before any stage directive")
            elif op == "conv":
                vals = [int(a) for a in args]
                current.append(ConvBlock(*vals))
            elif op == "sep":
                current.append(SeparableConv(*(int(a) for a in args)))
            elif op == "fire":
                current.append(Fire(*(int(a) for a in args)))
            elif op == "incep":
                current.append(Inception(*(int(a) for a in args)))
            elif op == "shuffle":
                current.append(ChannelShuffle(int(args[0])))
            elif op == "bn":
                current.append(BatchNorm(int(args[0])))
            elif op == "relu":
                current.append(ReLU())
            elif op == "pool":
                current.append(MaxPool2())
            elif op == "up":
                current.append(UpsampleNearest2())
            elif op == "cat":
                current.append(SkipConcat(int(args[0])))
            else:
                raise SpecError(f"line {lineno}: unknown directive {op!r}")
        except (IndexError, ValueError, KeyError) as exc:
            raise SpecError(f"line {lineno}: bad arguments for {op!r}: {exc}") from exc
    return ArchSpec(
        name,
        in_channels,
        out_channels,
        tuple(stages["alpha"]),
        tuple(stages["beta"]),
        tuple(stages["gamma"]),
        residual,
    )
