"""The two from-scratch network variants.

Nested detector: S stages of two 3x3 same-padded conv+ReLU layers,
2x2 max pooling between stages so stage s runs at 1/2^s resolution.
Each stage feeds a 1x1 side head whose logit map is upsampled back to
the input resolution and squashed by a sigmoid; the final map is the
convex combination of the side maps with weights alpha on the
probability simplex.

Patch classifier: conv5x5-valid / ReLU / pool, twice, then two fully
connected layers (ReLU + inverted dropout between them) ending in a
single sigmoid unit that scores the patch's center pixel. Input is a
fixed 28x28 single-channel patch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError
from .layers import (ConvParams, DenseParams, conv_backward, conv_forward,
                     dense_backward, dense_forward, dropout_mask,
                     maxpool2x2_backward, maxpool2x2_forward, relu,
                     relu_backward, sigmoid, sigmoid_backward,
                     upsample_nearest, upsample_nearest_backward)
from .rng import SplitMix64, splitmix64

PATCH_SIZE = 28


@dataclass(frozen=True)
class NestedArch:
    stages: int = 3
    widths: tuple = (8, 16, 32)
    input_hw: tuple = (64, 64)

    def __post_init__(self):
        if self.stages < 1 or len(self.widths) != self.stages:
            raise ParameterError(
                f"need one width per stage, got {self.widths} for S={self.stages}")
        div = 2 ** (self.stages - 1)
        if self.input_hw[0] % div or self.input_hw[1] % div:
            raise ParameterError(
                f"input dims {self.input_hw} must be divisible by {div}")


@dataclass
class NestedNetParams:
    arch: NestedArch
    stage_convs: list  # per stage: (ConvParams, ConvParams), 3x3 same
    side_heads: list   # per stage: ConvParams 1x1 -> 1 channel
    alpha: np.ndarray  # (S,) fusion weights on the simplex

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        """All learnable tensors in the fixed serialization order."""
        out = []
        for s, (a, b) in enumerate(self.stage_convs):
            out += [(f"stage{s}.conv_a.weights", a.weights),
                    (f"stage{s}.conv_a.bias", a.bias),
                    (f"stage{s}.conv_b.weights", b.weights),
                    (f"stage{s}.conv_b.bias", b.bias)]
        for s, head in enumerate(self.side_heads):
            out += [(f"side{s}.weights", head.weights),
                    (f"side{s}.bias", head.bias)]
        out.append(("alpha", self.alpha))
        return out


@dataclass(frozen=True)
class PatchArch:
    conv_channels: tuple = (4, 8)
    hidden: int = 32
    dropout_rate: float = 0.5
    input_hw: tuple = (PATCH_SIZE, PATCH_SIZE)

    def __post_init__(self):
        if self.input_hw != (PATCH_SIZE, PATCH_SIZE):
            raise ParameterError(f"patch input is fixed at {PATCH_SIZE}x{PATCH_SIZE}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ParameterError("dropout_rate must lie in [0, 1)")


@dataclass
class PatchNetParams:
    arch: PatchArch
    conv1: ConvParams  # 5x5 valid, 1 -> C1
    conv2: ConvParams  # 5x5 valid, C1 -> C2
    fc1: DenseParams   # 16*C2 -> hidden
    fc2: DenseParams   # hidden -> 1

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        return [("conv1.weights", self.conv1.weights), ("conv1.bias", self.conv1.bias),
                ("conv2.weights", self.conv2.weights), ("conv2.bias", self.conv2.bias),
                ("fc1.weights", self.fc1.weights), ("fc1.bias", self.fc1.bias),
                ("fc2.weights", self.fc2.weights), ("fc2.bias", self.fc2.bias)]


def _he_uniform(rng: SplitMix64, shape: tuple, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    u = rng.floats(int(np.prod(shape))).reshape(shape)
    return (2.0 * u - 1.0) * bound


def init_nested(arch: NestedArch, seed: int) -> NestedNetParams:
    """He-uniform conv weights, zero biases; side heads start at zero so
    every side map begins at exactly 0.5; alpha uniform over stages."""
    rng = SplitMix64(splitmix64(seed, 0))
    stage_convs = []
    in_ch = 1
    for width in arch.widths:
        a = ConvParams(_he_uniform(rng, (width, in_ch, 3, 3), in_ch * 9),
                       np.zeros(width), padding="same")
        b = ConvParams(_he_uniform(rng, (width, width, 3, 3), width * 9),
                       np.zeros(width), padding="same")
        stage_convs.append((a, b))
        in_ch = width
    side_heads = [ConvParams(np.zeros((1, w, 1, 1)), np.zeros(1), padding="same")
                  for w in arch.widths]
    alpha = np.full(arch.stages, 1.0 / arch.stages)
    return NestedNetParams(arch=arch, stage_convs=stage_convs,
                           side_heads=side_heads, alpha=alpha)


def init_patch(arch: PatchArch, seed: int) -> PatchNetParams:
    rng = SplitMix64(splitmix64(seed, 1))
    c1, c2 = arch.conv_channels
    conv1 = ConvParams(_he_uniform(rng, (c1, 1, 5, 5), 25), np.zeros(c1), padding="valid")
    conv2 = ConvParams(_he_uniform(rng, (c2, c1, 5, 5), c1 * 25), np.zeros(c2), padding="valid")
    flat = 16 * c2  # 28 -> 24 -> 12 -> 8 -> 4 spatial, so 4*4*C2 features
    fc1 = DenseParams(_he_uniform(rng, (arch.hidden, flat), flat), np.zeros(arch.hidden))
    fc2 = DenseParams(_he_uniform(rng, (1, arch.hidden), arch.hidden), np.zeros(1))
    return PatchNetParams(arch=arch, conv1=conv1, conv2=conv2, fc1=fc1, fc2=fc2)


@dataclass
class StageTrace:
    x_in: np.ndarray
    pre_a: np.ndarray
    act_a: np.ndarray
    pre_b: np.ndarray
    feat: np.ndarray
    pooled: np.ndarray | None = None
    pool_arg: np.ndarray | None = None


@dataclass
class ForwardTrace:
    stages: list = field(default_factory=list)
    side_logits: list = field(default_factory=list)    # at stage resolution
    side_probs: list = field(default_factory=list)     # at input resolution
    fused: np.ndarray | None = None


def _as_chw(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[np.newaxis]
    if x.ndim != 3:
        raise DimensionError(f"expected (H,W) or (C,H,W) input, got {x.shape}")
    return x


def side_output(feature: np.ndarray, head: ConvParams, factor: int) -> np.ndarray:
    """1x1 conv -> nearest upsample -> sigmoid, one probability map."""
    if head.weights.shape[0] != 1 or head.weights.shape[2:] != (1, 1):
        raise DimensionError(f"side head must be 1x1 with one output, got {head.weights.shape}")
    logit = conv_forward(feature, head)
    return sigmoid(upsample_nearest(logit, factor))[0]


def fuse_sides(sides: list, alpha: np.ndarray) -> np.ndarray:
    """Pixelwise convex combination of side maps."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if len(sides) != alpha.size:
        raise ParameterError(f"{len(sides)} side maps vs {alpha.size} weights")
    if np.any(alpha < -1e-9) or abs(alpha.sum() - 1.0) > 1e-9:
        raise ParameterError(f"alpha must lie on the simplex, got {alpha}")
    shape = sides[0].shape
    for s in sides:
        if s.shape != shape:
            raise DimensionError("side maps differ in shape")
    return sum(a * s for a, s in zip(alpha, sides))


def forward_nested(params: NestedNetParams, x: np.ndarray,
                   train_mode: bool = False, seed: int = 0) -> ForwardTrace:
    """Full forward pass; retains every intermediate needed by backward.

    train_mode and seed are part of the call contract for symmetry with
    the patch net; the nested variant itself has no stochastic layers.
    """
    del train_mode, seed
    x = _as_chw(x)
    if x.shape[1:] != tuple(params.arch.input_hw):
        raise DimensionError(
            f"input {x.shape[1:]} does not match arch {params.arch.input_hw}")
    trace = ForwardTrace()
    feat_in = x
    for s, (conv_a, conv_b) in enumerate(params.stage_convs):
        pre_a = conv_forward(feat_in, conv_a)
        act_a = relu(pre_a)
        pre_b = conv_forward(act_a, conv_b)
        feat = relu(pre_b)
        st = StageTrace(x_in=feat_in, pre_a=pre_a, act_a=act_a, pre_b=pre_b, feat=feat)
        logit = conv_forward(feat, params.side_heads[s])
        trace.side_logits.append(logit)
        trace.side_probs.append(sigmoid(upsample_nearest(logit, 2 ** s))[0])
        if s + 1 < params.arch.stages:
            st.pooled, st.pool_arg = maxpool2x2_forward(feat)
            feat_in = st.pooled
        trace.stages.append(st)
    # plain weighted sum, not the strict fuse_sides: gradients w.r.t.
    # alpha are taken on the unconstrained weights, and feasibility is
    # restored by the optimizer's simplex projection after each step
    trace.fused = sum(a * s for a, s in zip(params.alpha, trace.side_probs))
    return trace


@dataclass
class NestedGrads:
    stage_convs: list  # per stage: (dWa, dba, dWb, dbb)
    side_heads: list   # per stage: (dW, db)
    alpha: np.ndarray


def backward_nested(params: NestedNetParams, trace: ForwardTrace,
                    d_fused: np.ndarray, d_sides: list) -> NestedGrads:
    """Reverse-mode gradients for every learnable tensor.

    d_fused is dL/d(fused map); d_sides[i] is the DIRECT dL/d(side map i)
    from that side's own loss term (the fusion path is added here). The
    alpha gradient is taken on the stored weights, before any simplex
    projection the optimizer applies.
    """
    if len(d_sides) != params.arch.stages:
        raise DimensionError(f"expected {params.arch.stages} side gradients")
    d_alpha = np.array([float((d_fused * y).sum()) for y in trace.side_probs])
    d_feat_next = None  # gradient flowing from stage s+1 back through its pool
    head_grads: list = [None] * params.arch.stages
    conv_grads: list = [None] * params.arch.stages
    for s in range(params.arch.stages - 1, -1, -1):
        st = trace.stages[s]
        y_side = trace.side_probs[s]
        d_prob = d_sides[s] + params.alpha[s] * d_fused
        d_up = sigmoid_backward(y_side, d_prob)[np.newaxis]
        d_logit = upsample_nearest_backward(d_up, 2 ** s)
        d_feat, d_hw, d_hb = conv_backward(st.feat, params.side_heads[s], d_logit)
        head_grads[s] = (d_hw, d_hb)
        if d_feat_next is not None:
            d_feat = d_feat + maxpool2x2_backward(st.feat.shape, st.pool_arg, d_feat_next)
        conv_a, conv_b = params.stage_convs[s]
        d_pre_b = relu_backward(st.pre_b, d_feat)
        d_act_a, d_wb, d_bb = conv_backward(st.act_a, conv_b, d_pre_b)
        d_pre_a = relu_backward(st.pre_a, d_act_a)
        d_feat_next, d_wa, d_ba = conv_backward(st.x_in, conv_a, d_pre_a)
        conv_grads[s] = (d_wa, d_ba, d_wb, d_bb)
    return NestedGrads(stage_convs=conv_grads, side_heads=head_grads, alpha=d_alpha)


@dataclass
class PatchTrace:
    x: np.ndarray
    pre1: np.ndarray
    act1: np.ndarray
    pool1: np.ndarray
    arg1: np.ndarray
    pre2: np.ndarray
    act2: np.ndarray
    pool2: np.ndarray
    arg2: np.ndarray
    flat: np.ndarray
    fc1_pre: np.ndarray
    fc1_act: np.ndarray
    drop: np.ndarray
    fc1_out: np.ndarray
    logit: float
    prob: float


def forward_patch(params: PatchNetParams, patch: np.ndarray,
                  train_mode: bool = False, seed: int = 0) -> PatchTrace:
    """Score one 28x28 patch; returns the full trace (prob in .prob)."""
    x = _as_chw(patch)
    if x.shape != (1, PATCH_SIZE, PATCH_SIZE):
        raise DimensionError(f"patch must be 1x28x28, got {x.shape}")
    pre1 = conv_forward(x, params.conv1)          # C1 x 24 x 24
    act1 = relu(pre1)
    pool1, arg1 = maxpool2x2_forward(act1)        # C1 x 12 x 12
    pre2 = conv_forward(pool1, params.conv2)      # C2 x 8 x 8
    act2 = relu(pre2)
    pool2, arg2 = maxpool2x2_forward(act2)        # C2 x 4 x 4
    flat = pool2.reshape(-1)
    fc1_pre = dense_forward(flat, params.fc1)
    fc1_act = relu(fc1_pre)
    if train_mode and params.arch.dropout_rate > 0:
        drop = dropout_mask(fc1_act.shape, params.arch.dropout_rate, seed)
    else:
        drop = np.ones_like(fc1_act)
    fc1_out = fc1_act * drop
    logit = float(dense_forward(fc1_out, params.fc2)[0])
    prob = float(sigmoid(np.array([logit]))[0])
    return PatchTrace(x=x, pre1=pre1, act1=act1, pool1=pool1, arg1=arg1,
                      pre2=pre2, act2=act2, pool2=pool2, arg2=arg2, flat=flat,
                      fc1_pre=fc1_pre, fc1_act=fc1_act, drop=drop,
                      fc1_out=fc1_out, logit=logit, prob=prob)


@dataclass
class PatchGrads:
    conv1: tuple
    conv2: tuple
    fc1: tuple
    fc2: tuple


def backward_patch(params: PatchNetParams, trace: PatchTrace,
                   d_prob: float) -> PatchGrads:
    """Gradients of a scalar loss given dL/d(prob)."""
    d_logit = d_prob * trace.prob * (1.0 - trace.prob)
    d_fc1_out, d_w2, d_b2 = dense_backward(trace.fc1_out, params.fc2,
                                           np.array([d_logit]))
    d_fc1_act = d_fc1_out * trace.drop
    d_fc1_pre = relu_backward(trace.fc1_pre, d_fc1_act)
    d_flat, d_w1, d_b1 = dense_backward(trace.flat, params.fc1, d_fc1_pre)
    d_pool2 = d_flat.reshape(trace.pool2.shape)
    d_act2 = maxpool2x2_backward(trace.act2.shape, trace.arg2, d_pool2)
    d_pre2 = relu_backward(trace.pre2, d_act2)
    d_pool1, d_cw2, d_cb2 = conv_backward(trace.pool1, params.conv2, d_pre2)
    d_act1 = maxpool2x2_backward(trace.act1.shape, trace.arg1, d_pool1)
    d_pre1 = relu_backward(trace.pre1, d_act1)
    _, d_cw1, d_cb1 = conv_backward(trace.x, params.conv1, d_pre1)
    return PatchGrads(conv1=(d_cw1, d_cb1), conv2=(d_cw2, d_cb2),
                      fc1=(d_w1, d_b1), fc2=(d_w2, d_b2))
