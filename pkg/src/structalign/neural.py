"""Dilated CNN for inflection-point regression, with hand-written gradients.

The network consumes a fixed-size view of the performance/score distance
matrix and regresses up to 32 normalized (x, y) inflection coordinates,
padded with the (1, 1) end-of-path sentinel. Dilation rates grow with depth
to widen the receptive field without extra parameters.
"""

from __future__ import annotations

import ast
import struct
from dataclasses import dataclass, field

import numpy as np

from .simgrid import NetworkInputGrid, grid_coords_to_frames

MAX_POINTS = 32
OUTPUT_DIM = 2 * MAX_POINTS

CHECKPOINT_MAGIC = b"DCNN1"


class ShapeError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# inflection points


@dataclass
class InflectionPointList:
    """Ordered (performance_frame, score_frame) pairs.

    Odd-numbered points (1-based) end a synchronous subpath, even-numbered
    points begin the next one; the count is always even.
    """

    points: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    def validate(self, p: int, q: int) -> None:
        if len(self.points) % 2 != 0:
            raise ValueError(f"inflection point count must be even, got {len(self.points)}")
        prev_a = -1
        for a, b in self.points:
            if not (0 <= a < p and 0 <= b < q):
                raise ValueError(f"inflection point ({a}, {b}) outside {p}x{q} matrix")
            if a < prev_a:
                raise ValueError(f"inflection points not chronological at ({a}, {b})")
            prev_a = a

    def jump_edges(self) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        """(source, target) cell pairs: odd point i-1 feeds even point i."""
        return [
            (self.points[i - 1], self.points[i]) for i in range(1, len(self.points), 2)
        ]


def encode_targets(points: InflectionPointList, p: int, q: int) -> np.ndarray:
    """Normalize coordinates by (p-1, q-1) and pad to 32 pairs with (1, 1)."""
    if len(points) > MAX_POINTS:
        raise ValueError(f"at most {MAX_POINTS} inflection points, got {len(points)}")
    out = np.ones(OUTPUT_DIM)
    for i, (a, b) in enumerate(points.points):
        out[2 * i] = a / (p - 1) if p > 1 else 0.0
        out[2 * i + 1] = b / (q - 1) if q > 1 else 0.0
    return out


def decode_predictions(
    output: np.ndarray, p: int, q: int, merge_epsilon: float = 0.02
) -> InflectionPointList:
    """Clamp, strip trailing (1,1) pads, sort chronologically, map to frames."""
    pairs = np.asarray(output, dtype=np.float64).reshape(MAX_POINTS, 2).clip(0.0, 1.0)
    keep = MAX_POINTS
    while keep > 0 and np.linalg.norm(pairs[keep - 1] - 1.0) <= merge_epsilon:
        keep -= 1
    kept = sorted(map(tuple, pairs[:keep]), key=lambda xy: xy[0])
    if len(kept) % 2 != 0:
        kept = kept[:-1]
    grid = NetworkInputGrid(np.zeros((1, 1)), p, q)
    frames = [grid_coords_to_frames(xy, grid) for xy in kept]
    usable: list[tuple[int, int]] = []
    for i in range(0, len(frames), 2):
        src, dst = frames[i], frames[i + 1]
        # drop pairs that cannot form a jump edge: the source must strictly
        # precede the target in DP evaluation (row-major) order
        if src < dst:
            usable.extend((src, dst))
    return InflectionPointList(usable)


# ---------------------------------------------------------------------------
# layer primitives (functional; forward returns a cache for backward)


@dataclass(frozen=True)
class DilatedKernelSpec:
    kernel_size: int
    dilation: int = 1
    in_channels: int = 1
    out_channels: int = 1
    stride: int = 1
    padding: int = 0

    @property
    def effective_size(self) -> int:
        m, d = self.kernel_size, self.dilation
        return m + (d - 1) * (m - 1)


def _im2col(x: np.ndarray, spec: DilatedKernelSpec):
    n, c, h, w = x.shape
    m, d, s, p = spec.kernel_size, spec.dilation, spec.stride, spec.padding
    eff = spec.effective_size
    hp, wp = h + 2 * p, w + 2 * p
    if eff > hp or eff > wp:
        raise ShapeError(
            f"effective kernel {eff} exceeds padded input extent ({hp}, {wp})"
        )
    out_h = (hp - eff) // s + 1
    out_w = (wp - eff) // s + 1
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    rows = (np.arange(out_h) * s)[:, None] + (np.arange(m) * d)[None, :]
    cols = (np.arange(out_w) * s)[:, None] + (np.arange(m) * d)[None, :]
    # patches: (n, c, m, m, out_h, out_w)
    patches = xp[:, :, rows[:, None, :, None], cols[None, :, None, :]]
    patches = patches.transpose(0, 1, 4, 5, 2, 3)
    return patches.reshape(n, c * m * m, out_h * out_w), (out_h, out_w), xp.shape


def conv2d_dilated(
    x: np.ndarray, spec: DilatedKernelSpec, weights: np.ndarray, bias: np.ndarray
):
    """Dilated 2-D convolution: taps spaced `dilation` apart in the input."""
    n, c = x.shape[:2]
    if c != spec.in_channels:
        raise ShapeError(f"input channels {c} != spec {spec.in_channels}")
    if weights.shape != (spec.out_channels, c, spec.kernel_size, spec.kernel_size):
        raise ShapeError(f"weight shape {weights.shape} mismatches spec")
    cols, (out_h, out_w), padded_shape = _im2col(x, spec)
    wmat = weights.reshape(spec.out_channels, -1)
    y = np.matmul(wmat, cols) + bias[None, :, None]
    y = y.reshape(n, spec.out_channels, out_h, out_w)
    cache = (cols, x.shape, padded_shape, spec, weights)
    return y, cache


def conv2d_dilated_backward(grad_y: np.ndarray, cache):
    cols, x_shape, padded_shape, spec, weights = cache
    n = x_shape[0]
    m, d, s, p = spec.kernel_size, spec.dilation, spec.stride, spec.padding
    gmat = grad_y.reshape(n, spec.out_channels, -1)
    grad_b = gmat.sum(axis=(0, 2))
    grad_w = np.matmul(gmat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weights.shape)
    grad_cols = np.matmul(weights.reshape(spec.out_channels, -1).T, gmat)

    out_h, out_w = grad_y.shape[2], grad_y.shape[3]
    grad_padded = np.zeros((n, x_shape[1], padded_shape[2], padded_shape[3]),
                           dtype=grad_y.dtype)
    gp = grad_cols.reshape(n, x_shape[1], m, m, out_h, out_w)
    # accumulate one strided slice per kernel tap (cheap: m*m vectorized adds)
    for ki in range(m):
        for kj in range(m):
            grad_padded[:, :,
                        ki * d : ki * d + s * out_h : s,
                        kj * d : kj * d + s * out_w : s] += gp[:, :, ki, kj]
    grad_x = grad_padded[:, :, p : padded_shape[2] - p, p : padded_shape[3] - p] \
        if p else grad_padded
    return grad_x, grad_w, grad_b


def relu(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(grad_y: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return grad_y * mask


def max_pool2x2(x: np.ndarray):
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    windows = x[:, :, : 2 * ho, : 2 * wo].reshape(n, c, ho, 2, wo, 2)
    windows = windows.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    idx = windows.argmax(axis=-1)  # first index wins ties
    y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return y, (idx, x.shape)


def max_pool2x2_backward(grad_y: np.ndarray, cache) -> np.ndarray:
    idx, x_shape = cache
    n, c, h, w = x_shape
    ho, wo = h // 2, w // 2
    flat = np.zeros((n, c, ho, wo, 4), dtype=grad_y.dtype)
    np.put_along_axis(flat, idx[..., None], grad_y[..., None], axis=-1)
    grad_x = np.zeros(x_shape, dtype=grad_y.dtype)
    grad_x[:, :, : 2 * ho, : 2 * wo] = (
        flat.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, 2 * ho, 2 * wo)
    )
    return grad_x


def batch_norm(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
):
    """Per-channel normalization over (N, H, W); updates running stats in train."""
    axes = (0, 2, 3)
    shape = (1, -1, 1, 1)
    if train:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= momentum
        running_mean += (1 - momentum) * mean
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    y = gamma.reshape(shape) * xhat + beta.reshape(shape)
    return y, (xhat, inv_std, gamma, train, x.shape)


def batch_norm_backward(grad_y: np.ndarray, cache):
    xhat, inv_std, gamma, train, x_shape = cache
    axes = (0, 2, 3)
    shape = (1, -1, 1, 1)
    grad_gamma = (grad_y * xhat).sum(axis=axes)
    grad_beta = grad_y.sum(axis=axes)
    gx_hat = grad_y * gamma.reshape(shape)
    if train:
        grad_x = (
            gx_hat
            - gx_hat.mean(axis=axes).reshape(shape)
            - xhat * (gx_hat * xhat).mean(axis=axes).reshape(shape)
        ) * inv_std.reshape(shape)
    else:
        grad_x = gx_hat * inv_std.reshape(shape)
    return grad_x, grad_gamma, grad_beta


def dropout(x: np.ndarray, p: float, train: bool, rng: np.random.Generator | None):
    """Inverted dropout: active only in train mode, scaled by 1/(1-p)."""
    if not train or p <= 0:
        return x, None
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def dropout_backward(grad_y: np.ndarray, mask) -> np.ndarray:
    return grad_y if mask is None else grad_y * mask


def fully_connected(x: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    if x.shape[1] != weights.shape[1]:
        raise ShapeError(f"fc input {x.shape[1]} != weight fan-in {weights.shape[1]}")
    return x @ weights.T + bias, (x, weights)


def fully_connected_backward(grad_y: np.ndarray, cache):
    x, weights = cache
    return grad_y @ weights, grad_y.T @ x, grad_y.sum(axis=0)


def l2_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all entries; returns (loss, grad wrt pred)."""
    if pred.shape != target.shape:
        raise ShapeError(f"loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 128
    channels: tuple[int, int, int] = (16, 32, 64)
    kernel_size: int = 3
    dilation_layer2: int = 2
    dilation_layer3: int = 3
    fc_sizes: tuple[int, int] = (4096, 1024)
    output_dim: int = OUTPUT_DIM
    dropout_p: float = 0.5
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    @property
    def name(self) -> str:
        d2, d3 = self.dilation_layer2, self.dilation_layer3
        prefix = "CNN" if d2 == 1 and d3 == 1 else "DCNN"
        return f"{prefix}_{d2}+{d3}"

    @property
    def dilations(self) -> tuple[int, int, int]:
        return (1, self.dilation_layer2, self.dilation_layer3)

    @property
    def flatten_size(self) -> int:
        return self.channels[2] * (self.input_size // 8) ** 2


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class AlignmentNet:
    """Three conv/pool blocks (progressively dilated) plus a three-FC head."""

    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        m = config.kernel_size
        in_chans = (1,) + config.channels[:2]
        self.params: dict[str, np.ndarray] = {}
        self.running: dict[str, np.ndarray] = {}
        for i in range(3):
            ci, co = in_chans[i], config.channels[i]
            self.params[f"conv{i + 1}_w"] = _kaiming_uniform(
                rng, (co, ci, m, m), ci * m * m)
            self.params[f"conv{i + 1}_b"] = np.zeros(co, dtype=np.float32)
            self.params[f"bn{i + 1}_gamma"] = np.ones(co, dtype=np.float32)
            self.params[f"bn{i + 1}_beta"] = np.zeros(co, dtype=np.float32)
            self.running[f"bn{i + 1}_mean"] = np.zeros(co, dtype=np.float32)
            self.running[f"bn{i + 1}_var"] = np.ones(co, dtype=np.float32)
        fc_dims = (config.flatten_size,) + config.fc_sizes + (config.output_dim,)
        for i in range(3):
            fan_in, fan_out = fc_dims[i], fc_dims[i + 1]
            self.params[f"fc{i + 1}_w"] = _kaiming_uniform(
                rng, (fan_out, fan_in), fan_in)
            self.params[f"fc{i + 1}_b"] = np.zeros(fan_out, dtype=np.float32)

    def param_names(self) -> list[str]:
        return sorted(self.params)

    def conv_specs(self) -> list[DilatedKernelSpec]:
        cfg = self.config
        in_chans = (1,) + cfg.channels[:2]
        return [
            DilatedKernelSpec(
                kernel_size=cfg.kernel_size,
                dilation=d,
                in_channels=ci,
                out_channels=co,
                stride=1,
                # keeps spatial extent ahead of each 2x2 pool
                padding=d * (cfg.kernel_size - 1) // 2,
            )
            for d, ci, co in zip(cfg.dilations, in_chans, cfg.channels)
        ]

    def conv_stack(self, x: np.ndarray, train: bool):
        """conv -> relu -> bn -> pool, three times; returns features + caches."""
        caches = []
        for i, spec in enumerate(self.conv_specs(), start=1):
            x, c_conv = conv2d_dilated(x, spec, self.params[f"conv{i}_w"],
                                       self.params[f"conv{i}_b"])
            x, c_relu = relu(x)
            x, c_bn = batch_norm(
                x, self.params[f"bn{i}_gamma"], self.params[f"bn{i}_beta"],
                self.running[f"bn{i}_mean"], self.running[f"bn{i}_var"],
                train, self.config.bn_momentum, self.config.bn_eps)
            x, c_pool = max_pool2x2(x)
            caches.append((c_conv, c_relu, c_bn, c_pool))
        return x, caches

    def conv_stack_backward(self, grad: np.ndarray, caches, grads: dict):
        for i in range(3, 0, -1):
            c_conv, c_relu, c_bn, c_pool = caches[i - 1]
            grad = max_pool2x2_backward(grad, c_pool)
            grad, g_gamma, g_beta = batch_norm_backward(grad, c_bn)
            grads[f"bn{i}_gamma"] = g_gamma
            grads[f"bn{i}_beta"] = g_beta
            grad = relu_backward(grad, c_relu)
            grad, g_w, g_b = conv2d_dilated_backward(grad, c_conv)
            grads[f"conv{i}_w"] = g_w
            grads[f"conv{i}_b"] = g_b
        return grad

    def forward(
        self,
        inputs: np.ndarray,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ):
        """inputs: (N, S, S) or (N, 1, S, S) grids -> (N, 64) predictions."""
        x = np.asarray(inputs, dtype=np.float32)
        if x.ndim == 3:
            x = x[:, None, :, :]
        if x.shape[2] != self.config.input_size or x.shape[3] != self.config.input_size:
            raise ShapeError(
                f"grid size {x.shape[2:]} != model input {self.config.input_size}")
        x, conv_caches = self.conv_stack(x, train)
        batch = x.shape[0]
        conv_out_shape = x.shape
        x = x.reshape(batch, -1)
        fc_caches = []
        for i in (1, 2):
            x, c_fc = fully_connected(x, self.params[f"fc{i}_w"], self.params[f"fc{i}_b"])
            x, c_relu = relu(x)
            x, c_drop = dropout(x, self.config.dropout_p, train, rng)
            fc_caches.append((c_fc, c_relu, c_drop))
        out, c_fc3 = fully_connected(x, self.params["fc3_w"], self.params["fc3_b"])
        cache = (conv_caches, conv_out_shape, fc_caches, c_fc3)
        return out, cache

    def predict(self, grid: NetworkInputGrid) -> np.ndarray:
        out, _ = self.forward(grid.values[None, :, :], train=False)
        return out[0]

    def backward(self, grad_out: np.ndarray, cache) -> dict[str, np.ndarray]:
        conv_caches, conv_out_shape, fc_caches, c_fc3 = cache
        grads: dict[str, np.ndarray] = {}
        grad, grads["fc3_w"], grads["fc3_b"] = fully_connected_backward(grad_out, c_fc3)
        for i in (2, 1):
            c_fc, c_relu, c_drop = fc_caches[i - 1]
            grad = dropout_backward(grad, c_drop)
            grad = relu_backward(grad, c_relu)
            grad, grads[f"fc{i}_w"], grads[f"fc{i}_b"] = fully_connected_backward(grad, c_fc)
        grad = grad.reshape(conv_out_shape)
        self.conv_stack_backward(grad, conv_caches, grads)
        return grads

    def state_copy(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in {**self.params, **self.running}.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k in self.params:
            self.params[k] = state[k].copy()
        for k in self.running:
            self.running[k] = state[k].copy()


def receptive_field_mask(config: ModelConfig, trials: int = 8, seed: int = 0) -> np.ndarray:
    """Input pixels influencing the center unit of the layer-3 feature map.

    Gradient-masking estimate: union of |grad| > 0 masks over several random
    positive-weight trials (positivity avoids dead ReLU paths; multiple trials
    vary the max-pool argmax selections).
    """
    mask = np.zeros((config.input_size, config.input_size), dtype=bool)
    for t in range(trials):
        net = AlignmentNet(config, seed=seed + t)
        for name in list(net.params):
            if name.startswith("conv") and name.endswith("_w"):
                net.params[name] = np.abs(net.params[name]) + 1e-3
        rng = np.random.default_rng(seed + 1000 + t)
        s = config.input_size
        x = rng.random((1, 1, s, s), dtype=np.float32) + 0.1
        feats, caches = net.conv_stack(x, train=False)
        grad = np.zeros_like(feats)
        grad[0, 0, feats.shape[2] // 2, feats.shape[3] // 2] = 1.0
        grad_x = net.conv_stack_backward(grad, caches, {})
        mask |= np.abs(grad_x[0, 0]) > 0
    return mask


# ---------------------------------------------------------------------------
# training


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self._scratch = {k: np.empty_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.betas
        bias1 = 1 - b1 ** self.t
        bias2 = 1 - b2 ** self.t
        for k in sorted(params):
            g = grads[k].astype(params[k].dtype, copy=False)
            m, v, s = self.m[k], self.v[k], self._scratch[k]
            # all updates run through one scratch buffer to avoid temporaries
            m *= b1
            np.multiply(g, 1 - b1, out=s)
            m += s
            v *= b2
            np.multiply(g, g, out=s)
            s *= 1 - b2
            v += s
            np.divide(v, bias2, out=s)
            np.sqrt(s, out=s)
            s += self.eps
            np.divide(m, s, out=s)
            s *= self.lr / bias1
            params[k] -= s


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    patience: int = 5
    seed: int = 0


@dataclass
class TrainResult:
    model: "AlignmentNet"
    best_val_loss: float
    best_epoch: int
    history: list[tuple[int, float, float]]  # (epoch, train_loss, val_loss)


def _eval_loss(model: AlignmentNet, grids: np.ndarray, targets: np.ndarray,
               batch_size: int) -> float:
    total, count = 0.0, 0
    for start in range(0, len(grids), batch_size):
        out, _ = model.forward(grids[start : start + batch_size], train=False)
        tgt = targets[start : start + batch_size]
        total += float(np.sum((out - tgt) ** 2))
        count += out.size
    return total / count


def train(
    model: AlignmentNet,
    train_set: list[tuple[np.ndarray, np.ndarray]],
    val_set: list[tuple[np.ndarray, np.ndarray]],
    config: TrainConfig = TrainConfig(),
) -> TrainResult:
    """Adam + early stopping on validation loss; restores the best state."""
    if not train_set or not val_set:
        raise ValueError("train and validation sets must be non-empty")
    rng = np.random.default_rng(config.seed)
    tg = np.stack([np.asarray(g, dtype=np.float32) for g, _ in train_set])
    tt = np.stack([np.asarray(t, dtype=np.float32) for _, t in train_set])
    vg = np.stack([np.asarray(g, dtype=np.float32) for g, _ in val_set])
    vt = np.stack([np.asarray(t, dtype=np.float32) for _, t in val_set])

    optimizer = Adam(model.params, config.learning_rate, config.betas,
                     config.adam_eps)
    best_state = model.state_copy()
    best_val = _eval_loss(model, vg, vt, config.batch_size)
    best_epoch = 0
    history: list[tuple[int, float, float]] = []
    stale = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(tg))
        epoch_loss, batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            out, cache = model.forward(tg[idx], train=True, rng=rng)
            loss, grad = l2_loss(out, tt[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {batches}")
            grads = model.backward(grad, cache)
            optimizer.step(model.params, grads)
            epoch_loss += loss
            batches += 1
        train_loss = epoch_loss / batches
        val_loss = _eval_loss(model, vg, vt, config.batch_size)
        history.append((epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val, best_epoch, stale = val_loss, epoch, 0
            best_state = model.state_copy()
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.load_state(best_state)
    return TrainResult(model, best_val, best_epoch, history)


# ---------------------------------------------------------------------------
# checkpoint I/O: DCNN1 magic, key=value config block, named f32 arrays


def save_checkpoint(path, model: AlignmentNet, metadata: dict | None = None) -> None:
    cfg = model.config
    meta = dict(metadata or {})
    lines = [
        "version=1",
        f"input_size={cfg.input_size}",
        f"channels={cfg.channels[0]},{cfg.channels[1]},{cfg.channels[2]}",
        f"kernel_size={cfg.kernel_size}",
        f"dilation_layer2={cfg.dilation_layer2}",
        f"dilation_layer3={cfg.dilation_layer3}",
        f"fc_sizes={cfg.fc_sizes[0]},{cfg.fc_sizes[1]}",
        f"output_dim={cfg.output_dim}",
        f"dropout_p={cfg.dropout_p!r}",
        f"bn_momentum={cfg.bn_momentum!r}",
        f"bn_eps={cfg.bn_eps!r}",
    ]
    lines += [f"meta.{k}={v!r}" for k, v in sorted(meta.items())]
    block = "\n".join(lines).encode()
    arrays = {**model.params, **model.running}
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(block)))
        f.write(block)
        f.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = arrays[name].astype("<f4")
            encoded = name.encode()
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path) -> tuple[AlignmentNet, dict]:
    from .features import FormatError

    with open(path, "rb") as f:
        if f.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not a DCNN1 checkpoint")
        (block_len,) = struct.unpack("<I", f.read(4))
        fields: dict[str, str] = {}
        for line in f.read(block_len).decode().splitlines():
            key, _, value = line.partition("=")
            fields[key] = value
        config = ModelConfig(
            input_size=int(fields["input_size"]),
            channels=tuple(int(v) for v in fields["channels"].split(",")),
            kernel_size=int(fields["kernel_size"]),
            dilation_layer2=int(fields["dilation_layer2"]),
            dilation_layer3=int(fields["dilation_layer3"]),
            fc_sizes=tuple(int(v) for v in fields["fc_sizes"].split(",")),
            output_dim=int(fields["output_dim"]),
            dropout_p=ast.literal_eval(fields["dropout_p"]),
            bn_momentum=ast.literal_eval(fields["bn_momentum"]),
            bn_eps=ast.literal_eval(fields["bn_eps"]),
        )
        metadata = {
            k[5:]: ast.literal_eval(v) for k, v in fields.items() if k.startswith("meta.")
        }
        (n_arrays,) = struct.unpack("<I", f.read(4))
        arrays = {}
        for _ in range(n_arrays):
            (name_len,) = struct.unpack("<I", f.read(4))
            name = f.read(name_len).decode()
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            count = int(np.prod(shape)) if shape else 1
            arrays[name] = np.frombuffer(
                f.read(4 * count), dtype="<f4").reshape(shape).copy()
    model = AlignmentNet(config, seed=0)
    model.load_state(arrays)
    return model, metadata
