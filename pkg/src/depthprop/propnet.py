"""Gated temporal propagation network at toy scale.

Dataflow per propagated frame: encode the (normalized) input flow and luma
difference into flow features, refine the flow with a lightweight 2-layer
head, warp the previous depth and neck features with the refined flow,
fuse RGB / warped-depth / flow features through a depth gate, push the
fusion through the shared encoder into a 4-level pyramid, and apply a
flow-gated residual correction on top of the warped neck at every level.
The decoder turns the corrected neck back into positive depth.

Everything is plain numpy; weights are deterministic functions of a seed,
and hand-crafted weights can be injected for calibration or diagnosis.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .camera import Intrinsics
from .grid import as_grid, channel_concat, luma_diff, resize_bilinear
from .warp import backward_warp

LEVEL_CHANNELS = (16, 32, 64, 128)
LEVEL_STRIDES = (4, 8, 16, 32)
BRANCH_CHANNELS = 16
LEAKY_SLOPE = 0.01
MIN_DEPTH = 1e-6


def leaky(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, x, LEAKY_SLOPE * x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(np.float32(0.0), x)


_ACTIVATIONS = {"none": lambda x: x, "leaky": leaky, "sigmoid": sigmoid}


@dataclass
class ConvLayer:
    """Odd-square-kernel convolution with same padding.

    kernel is (out_ch, in_ch, k, k) float32, bias (out_ch,). Output spatial
    size is ceil(input / stride).
    """

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1
    activation: str = "none"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")

    @property
    def out_ch(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_ch(self) -> int:
        return self.kernel.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = conv2d(x, self.kernel, self.bias, self.stride)
        return _ACTIVATIONS[self.activation](y)


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, stride: int = 1) -> np.ndarray:
    """Same-padded 2D convolution of an (H, W, Cin) grid; output ceil(H/s) x ceil(W/s)."""
    h, w, cin = x.shape
    cout, cin_k, kh, kw = kernel.shape
    if cin != cin_k:
        raise ValueError(f"input has {cin} channels, kernel expects {cin_k}")
    out_h = -(-h // stride)
    out_w = -(-w // stride)
    pad_h = max((out_h - 1) * stride + kh - h, 0)
    pad_w = max((out_w - 1) * stride + kw - w, 0)
    pt, pl = pad_h // 2, pad_w // 2
    xp = np.pad(x, ((pt, pad_h - pt), (pl, pad_w - pl), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))[::stride, ::stride]
    out = np.tensordot(win, kernel, axes=[(2, 3, 4), (1, 2, 3)]) + bias
    return np.ascontiguousarray(out, dtype=np.float32)


def _chain(layers: list[ConvLayer], x: np.ndarray) -> np.ndarray:
    for layer in layers:
        x = layer.apply(x)
    return x


# ---------------------------------------------------------------------------
# Weight container and topology.

@dataclass
class PropWeights:
    """All learnable state of the propagation network.

    Immutable by convention after construction; use dataclasses.replace (and
    copy the per-level lists) to derive modified variants.
    """

    flow_branch: list[ConvLayer]
    rgb_branch: list[ConvLayer]
    depth_branch: list[ConvLayer]
    shared_encoder: list[ConvLayer]
    flow_refine: list[ConvLayer]
    gate_depth: ConvLayer
    lin_flow: ConvLayer
    gate_feature: list[list[ConvLayer]]
    residual_refine: list[list[ConvLayer]]
    decoder: list[ConvLayer]
    seed: int | None = None


def _topology() -> list[tuple[str, int, int, int, int, str]]:
    """Canonical layer table: (name, out_ch, in_ch, k, stride, activation)."""
    c = BRANCH_CHANNELS
    table = [
        ("flow_branch.0", 8, 3, 3, 2, "leaky"),
        ("flow_branch.1", c, 8, 3, 2, "leaky"),
        ("rgb_branch.0", 8, 3, 3, 2, "leaky"),
        ("rgb_branch.1", c, 8, 3, 2, "leaky"),
        ("depth_branch.0", 8, 1, 3, 2, "leaky"),
        ("depth_branch.1", c, 8, 3, 2, "leaky"),
        ("shared_encoder.0", LEVEL_CHANNELS[0], c, 3, 1, "leaky"),
        ("shared_encoder.1", LEVEL_CHANNELS[1], LEVEL_CHANNELS[0], 3, 2, "leaky"),
        ("shared_encoder.2", LEVEL_CHANNELS[2], LEVEL_CHANNELS[1], 3, 2, "leaky"),
        ("shared_encoder.3", LEVEL_CHANNELS[3], LEVEL_CHANNELS[2], 3, 2, "leaky"),
        ("flow_refine.0", 8, c, 3, 1, "none"),
        ("flow_refine.1", 2, 8, 3, 1, "none"),
        ("gate_depth", c, c, 1, 1, "sigmoid"),
        ("lin_flow", c, c, 1, 1, "none"),
    ]
    for i, ci in enumerate(LEVEL_CHANNELS):
        table.append((f"gate_feature.{i}.0", ci, c, 3, 1, "leaky"))
        table.append((f"gate_feature.{i}.1", ci, ci, 3, 1, "sigmoid"))
    for i, ci in enumerate(LEVEL_CHANNELS):
        table.append((f"residual_refine.{i}.0", ci, 2 * ci, 3, 1, "leaky"))
        table.append((f"residual_refine.{i}.1", ci, ci, 3, 1, "none"))
    table += [
        ("decoder.0", 32, sum(LEVEL_CHANNELS), 3, 1, "leaky"),
        ("decoder.1", 16, 32, 3, 1, "leaky"),
        ("decoder.2", 1, 16, 3, 1, "none"),
    ]
    return table


def seeded_weights(seed: int) -> PropWeights:
    """Deterministic fan-in-scaled initialization; same seed, same bits."""
    rng = np.random.default_rng(seed)
    made: dict[str, ConvLayer] = {}
    for name, cout, cin, k, stride, act in _topology():
        std = np.sqrt(2.0 / (cin * k * k))
        kernel = rng.normal(0.0, std, size=(cout, cin, k, k)).astype(np.float32)
        bias = np.zeros(cout, dtype=np.float32)
        made[name] = ConvLayer(kernel=kernel, bias=bias, stride=stride, activation=act)
    return _assemble(made, seed=seed)


def _assemble(made: dict[str, ConvLayer], seed: int | None) -> PropWeights:
    def seq(prefix, n):
        return [made[f"{prefix}.{i}"] for i in range(n)]

    return PropWeights(
        flow_branch=seq("flow_branch", 2),
        rgb_branch=seq("rgb_branch", 2),
        depth_branch=seq("depth_branch", 2),
        shared_encoder=seq("shared_encoder", 4),
        flow_refine=seq("flow_refine", 2),
        gate_depth=made["gate_depth"],
        lin_flow=made["lin_flow"],
        gate_feature=[seq(f"gate_feature.{i}", 2) for i in range(4)],
        residual_refine=[seq(f"residual_refine.{i}", 2) for i in range(4)],
        decoder=seq("decoder", 3),
        seed=seed,
    )


def named_layers(w: PropWeights):
    """(name, layer) pairs in the canonical order of the topology table."""
    for i, layer in enumerate(w.flow_branch):
        yield f"flow_branch.{i}", layer
    for i, layer in enumerate(w.rgb_branch):
        yield f"rgb_branch.{i}", layer
    for i, layer in enumerate(w.depth_branch):
        yield f"depth_branch.{i}", layer
    for i, layer in enumerate(w.shared_encoder):
        yield f"shared_encoder.{i}", layer
    for i, layer in enumerate(w.flow_refine):
        yield f"flow_refine.{i}", layer
    yield "gate_depth", w.gate_depth
    yield "lin_flow", w.lin_flow
    for i, stack in enumerate(w.gate_feature):
        for j, layer in enumerate(stack):
            yield f"gate_feature.{i}.{j}", layer
    for i, stack in enumerate(w.residual_refine):
        for j, layer in enumerate(stack):
            yield f"residual_refine.{i}.{j}", layer
    for i, layer in enumerate(w.decoder):
        yield f"decoder.{i}", layer


WEIGHTS_MAGIC = b"PWT1"


def save_weights(path, w: PropWeights) -> None:
    """Snapshot: magic, then per layer name length + name + 4 u32 dims + f32 data."""
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        for name, layer in named_layers(w):
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<4I", *layer.kernel.shape))
            f.write(np.ascontiguousarray(layer.kernel, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())


def load_weights(path) -> PropWeights:
    """Read a snapshot, validating names and dims against the canonical topology."""
    spec_by_name = {name: (cout, cin, k, stride, act)
                    for name, cout, cin, k, stride, act in _topology()}
    made: dict[str, ConvLayer] = {}
    with open(path, "rb") as f:
        if f.read(4) != WEIGHTS_MAGIC:
            raise ValueError(f"{path}: bad weight-snapshot magic")
        while True:
            head = f.read(4)
            if not head:
                break
            (nlen,) = struct.unpack("<I", head)
            name = f.read(nlen).decode("utf-8")
            cout, cin, kh, kw = struct.unpack("<4I", f.read(16))
            if name not in spec_by_name:
                raise ValueError(f"{path}: unknown layer {name!r}")
            ecout, ecin, ek, stride, act = spec_by_name[name]
            if (cout, cin, kh, kw) != (ecout, ecin, ek, ek):
                raise ValueError(f"{path}: layer {name!r} dims {(cout, cin, kh, kw)} "
                                 f"do not match topology {(ecout, ecin, ek, ek)}")
            kdata = f.read(4 * cout * cin * kh * kw)
            bdata = f.read(4 * cout)
            if len(kdata) + len(bdata) != 4 * (cout * cin * kh * kw + cout):
                raise ValueError(f"{path}: truncated payload in layer {name!r}")
            kernel = np.frombuffer(kdata, dtype="<f4").reshape(cout, cin, kh, kw).copy()
            bias = np.frombuffer(bdata, dtype="<f4").copy()
            made[name] = ConvLayer(kernel=kernel, bias=bias, stride=stride, activation=act)
    missing = [n for n in spec_by_name if n not in made]
    if missing:
        raise ValueError(f"{path}: snapshot missing layers {missing[:3]}...")
    return _assemble(made, seed=None)


# ---------------------------------------------------------------------------
# Pyramid plumbing.

def check_pyramid(levels: list[np.ndarray]) -> None:
    if len(levels) != 4:
        raise ValueError(f"pyramid must have 4 levels, got {len(levels)}")
    for i in range(1, 4):
        ph, pw = levels[i - 1].shape[:2]
        lh, lw = levels[i].shape[:2]
        if (lh, lw) != (-(-ph // 2), -(-pw // 2)):
            raise ValueError(f"level {i} is {lh}x{lw}, expected half of {ph}x{pw}")


def _level_dims(h: int, w: int, level: int) -> tuple[int, int]:
    for _ in range(level + 2):
        h = -(-h // 2)
        w = -(-w // 2)
    return h, w


@dataclass
class FrameState:
    """Per-timestep propagation state carried across frames."""

    neck: list[np.ndarray]
    depth: np.ndarray
    frames_since_keyframe: int
    intrinsics: Intrinsics


# ---------------------------------------------------------------------------
# Network operations.

def encode_flow(flow: np.ndarray, luma_d: np.ndarray, w: PropWeights) -> np.ndarray:
    """Flow features at 1/4 resolution from (u/W, v/H, luma difference)."""
    flow = as_grid(flow)
    luma_d = as_grid(luma_d)
    if flow.shape[:2] != luma_d.shape[:2]:
        raise ValueError(f"flow {flow.shape[:2]} and luma {luma_d.shape[:2]} dims differ")
    h, wd = flow.shape[:2]
    x = np.concatenate([flow[:, :, :1] / wd, flow[:, :, 1:] / h, luma_d], axis=2)
    return _chain(w.flow_branch, x.astype(np.float32))


def refine_flow(f_o: np.ndarray, flow_init: np.ndarray, w: PropWeights) -> np.ndarray:
    """Add a learned full-resolution correction to the input flow (pixels)."""
    flow_init = as_grid(flow_init)
    h, wd = flow_init.shape[:2]
    if f_o.shape[:2] != _level_dims(h, wd, 0):
        raise ValueError(f"flow features {f_o.shape[:2]} are not 1/4 of {h}x{wd}")
    half = (-(-h // 2), -(-wd // 2))
    x = w.flow_refine[0].apply(f_o)
    x = leaky(resize_bilinear(x, *half))
    x = w.flow_refine[1].apply(x)
    correction = resize_bilinear(x, h, wd)
    return flow_init + correction


def fuse(f_i: np.ndarray, f_d_warped: np.ndarray, f_o: np.ndarray,
         w: PropWeights) -> np.ndarray:
    """Depth-gated fusion: f_i + sigmoid(gate(f_o)) * f_d_warped + lin(f_o)."""
    if not (f_i.shape == f_d_warped.shape == f_o.shape):
        raise ValueError(f"fuse inputs disagree: {f_i.shape}, {f_d_warped.shape}, {f_o.shape}")
    gate = w.gate_depth.apply(f_o)
    return f_i + gate * f_d_warped + w.lin_flow.apply(f_o)


def encode_fused(c_hat: np.ndarray, w: PropWeights) -> list[np.ndarray]:
    """Shared-encoder pyramid at 1/4 .. 1/32 resolution."""
    levels = []
    x = c_hat
    for layer in w.shared_encoder:
        x = layer.apply(x)
        levels.append(x)
    return levels


def residual_refine(c: list[np.ndarray], neck_prev: list[np.ndarray],
                    neck_prev_warped: list[np.ndarray], f_o: np.ndarray,
                    w: PropWeights) -> list[np.ndarray]:
    """Per-level gated residual on top of the warped previous neck.

    correction_i = conv2(gate_i * leaky(conv1(concat(c_i, neck_prev_i))))
    with gate_i = sigmoid(stack_i(f_o resized to level i)); a closed gate
    (and zero conv2 bias) leaves the warped neck untouched. No weights are
    shared across levels.
    """
    for pyr in (c, neck_prev, neck_prev_warped):
        check_pyramid(pyr)
    out = []
    for i in range(4):
        if c[i].shape != neck_prev[i].shape or c[i].shape != neck_prev_warped[i].shape:
            raise ValueError(f"level {i} shapes disagree")
        lh, lw = c[i].shape[:2]
        gate = _chain(w.gate_feature[i], resize_bilinear(f_o, lh, lw))
        x = w.residual_refine[i][0].apply(channel_concat(c[i], neck_prev[i]))
        correction = w.residual_refine[i][1].apply(gate * x)
        out.append(correction + neck_prev_warped[i])
    return out


def decode(neck: list[np.ndarray], w: PropWeights,
           out_hw: tuple[int, int] | None = None) -> np.ndarray:
    """Fold the pyramid back to a full-resolution, strictly positive depth grid."""
    check_pyramid(neck)
    h4, w4 = neck[0].shape[:2]
    if out_hw is None:
        out_hw = (4 * h4, 4 * w4)
    h, wd = out_hw
    x = np.concatenate([neck[0]] + [resize_bilinear(lv, h4, w4) for lv in neck[1:]], axis=2)
    x = w.decoder[0].apply(x)
    x = resize_bilinear(x, -(-h // 2), -(-wd // 2))
    x = w.decoder[1].apply(x)
    x = resize_bilinear(x, h, wd)
    x = w.decoder[2].apply(x)
    return np.maximum(softplus(x), np.float32(MIN_DEPTH))


def toy_base(rgb: np.ndarray, w: PropWeights,
             injected: tuple[list[np.ndarray], np.ndarray] | None = None
             ) -> tuple[list[np.ndarray], np.ndarray]:
    """Keyframe initialization: full encoder+decoder pass over RGB.

    When ``injected`` carries externally produced (pyramid, depth) — e.g.
    read from files — they are passed through untouched, bypassing the
    network entirely.
    """
    if injected is not None:
        neck, depth = injected
        check_pyramid(neck)
        return neck, as_grid(depth)
    rgb = as_grid(rgb)
    if rgb.shape[2] != 3:
        raise ValueError(f"expected 3-channel rgb, got {rgb.shape[2]}")
    f_i = _chain(w.rgb_branch, rgb)
    neck = encode_fused(f_i, w)
    depth = decode(neck, w, out_hw=rgb.shape[:2])
    return neck, depth


def propagate_step(state: FrameState, rgb_t: np.ndarray, rgb_prev: np.ndarray,
                   flow_init: np.ndarray, w: PropWeights
                   ) -> tuple[FrameState, np.ndarray, np.ndarray]:
    """One propagated (non-keyframe) frame.

    Returns the successor state, the decoded depth, and the refined flow.
    Neck level i is warped with the refined flow resized to that level and
    scaled by the per-axis resolution ratio.
    """
    rgb_t = as_grid(rgb_t)
    rgb_prev = as_grid(rgb_prev)
    flow_init = as_grid(flow_init)
    h, wd = rgb_t.shape[:2]
    if rgb_prev.shape[:2] != (h, wd) or flow_init.shape[:2] != (h, wd) \
            or state.depth.shape[:2] != (h, wd):
        raise ValueError("propagate_step inputs must share the full resolution")

    ld = luma_diff(rgb_t, rgb_prev)
    f_o = encode_flow(flow_init, ld, w)
    flow_ref = refine_flow(f_o, flow_init, w)

    depth_warped, _ = backward_warp(state.depth, flow_ref)
    neck_warped = []
    for level in state.neck:
        lh, lw = level.shape[:2]
        lflow = resize_bilinear(flow_ref, lh, lw)
        scale = np.array([lw / wd, lh / h], dtype=np.float32)
        warped, _ = backward_warp(level, lflow * scale)
        neck_warped.append(warped)

    f_i = _chain(w.rgb_branch, rgb_t)
    # Log-depth input for scale robustness; clamp shields injected zeros.
    f_d = _chain(w.depth_branch, np.log(np.maximum(depth_warped, np.float32(MIN_DEPTH))))
    c_hat = fuse(f_i, f_d, f_o, w)
    c_pyr = encode_fused(c_hat, w)
    neck_new = residual_refine(c_pyr, state.neck, neck_warped, f_o, w)
    depth_new = decode(neck_new, w, out_hw=(h, wd))
    next_state = FrameState(neck=neck_new, depth=depth_new,
                            frames_since_keyframe=state.frames_since_keyframe + 1,
                            intrinsics=state.intrinsics)
    return next_state, depth_new, flow_ref


# ---------------------------------------------------------------------------
# Weight surgery used for calibration and diagnosis.

def zeroed(layer: ConvLayer, bias: float = 0.0) -> ConvLayer:
    return ConvLayer(kernel=np.zeros_like(layer.kernel),
                     bias=np.full_like(layer.bias, bias),
                     stride=layer.stride, activation=layer.activation)


def identity_propagation_weights(w: PropWeights) -> PropWeights:
    """Force feature gates shut and zero the flow refiner.

    Under zero flow the warped neck then becomes a fixed point of
    propagate_step — useful as a diagnostic baseline.
    """
    gate_feature = [[stack[0], zeroed(stack[1], bias=-40.0)] for stack in w.gate_feature]
    flow_refine = [zeroed(l) for l in w.flow_refine]
    return replace(w, gate_feature=gate_feature, flow_refine=flow_refine)


def fit_flow_refiner(w: PropWeights,
                     samples: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
                     ) -> PropWeights:
    """Least-squares fit of the refiner's output layer.

    Each sample is (f_o, flow_init, flow_target). The first refiner conv
    stays fixed; the second is solved in closed form to predict the
    half-resolution correction resize(flow_target - flow_init).
    """
    rows, targets = [], []
    for f_o, flow_init, flow_target in samples:
        flow_init = as_grid(flow_init)
        h, wd = flow_init.shape[:2]
        half = (-(-h // 2), -(-wd // 2))
        feat = leaky(resize_bilinear(w.flow_refine[0].apply(f_o), *half))
        goal = resize_bilinear(as_grid(flow_target) - flow_init, *half)
        fp = np.pad(feat, ((1, 1), (1, 1), (0, 0)))
        win = sliding_window_view(fp, (3, 3), axis=(0, 1))
        rows.append(win.reshape(-1, feat.shape[2] * 9))
        targets.append(goal.reshape(-1, 2))
    a = np.concatenate(rows).astype(np.float64)
    a = np.concatenate([a, np.ones((a.shape[0], 1))], axis=1)
    b = np.concatenate(targets).astype(np.float64)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    cin = w.flow_refine[1].in_ch
    kernel = sol[:-1].T.reshape(2, cin, 3, 3).astype(np.float32)
    bias = sol[-1].astype(np.float32)
    fitted = ConvLayer(kernel=kernel, bias=bias, stride=1, activation="none")
    return replace(w, flow_refine=[w.flow_refine[0], fitted])
