"""Tiny conditional noise-prediction network with exact analytic gradients.

Three 3x3 convolutions with tanh between them; a learned per-timestep
embedding is projected and added after the first convolution, the condition
embedding after the first and second, and any control image is concatenated
to the input channels. Everything is numpy float64 with hand-written backprop, so
gradients can be checked against finite differences and training is
bit-deterministic given a seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

MAGIC = b"DNSR"
FILE_VERSION = 1


@dataclass(frozen=True)
class DenoiserSpec:
    image_channels: int = 3
    control_channels: int = 0  # extra input channels from a control image
    hidden1: int = 16
    hidden2: int = 16
    cond_dim: int = 16  # condition embedding dimension D
    t_dim: int = 8  # timestep embedding dimension
    T: int = 50  # schedule length (size of the timestep table)
    linear: bool = False  # drop the tanh layers (reduced spec for linearity checks)

    def __post_init__(self):
        if min(self.image_channels, self.hidden1, self.hidden2,
               self.cond_dim, self.t_dim, self.T) < 1:
            raise ValueError("all spec dimensions must be >= 1")
        if self.control_channels < 0:
            raise ValueError("control_channels must be >= 0")

    @property
    def in_channels(self) -> int:
        return self.image_channels + self.control_channels

    def shapes(self) -> dict[str, tuple]:
        return {
            "conv1_w": (self.hidden1, self.in_channels, 3, 3),
            "conv1_b": (self.hidden1,),
            "t_table": (self.T, self.t_dim),
            "t_proj": (self.hidden1, self.t_dim),
            "cond_proj1": (self.hidden1, self.cond_dim),
            "conv2_w": (self.hidden2, self.hidden1, 3, 3),
            "conv2_b": (self.hidden2,),
            "cond_proj": (self.hidden2, self.cond_dim),
            "conv3_w": (self.image_channels, self.hidden2, 3, 3),
            "conv3_b": (self.image_channels,),
        }

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes().values())

    def hash(self) -> int:
        """FNV-1a over the packed spec fields; stored in parameter files."""
        h = 0xCBF29CE484222325
        packed = struct.pack("<8H", self.image_channels, self.control_channels,
                             self.hidden1, self.hidden2, self.cond_dim,
                             self.t_dim, self.T, int(self.linear))
        for b in packed:
            h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
        return h


@dataclass
class DenoiserParams:
    spec: DenoiserSpec
    tensors: dict[str, np.ndarray]

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(self.spec, {k: v.copy() for k, v in self.tensors.items()})


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    steps: int = 2000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    cond_dropout: float = 0.1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if not 0.0 <= self.cond_dropout <= 1.0:
            raise ValueError("cond_dropout must lie in [0, 1]")


def init_params(spec: DenoiserSpec, seed: int = 0) -> DenoiserParams:
    """Seeded uniform init scaled by fan-in; the output conv starts at zero."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in spec.shapes().items():
        if name.startswith("conv3"):
            tensors[name] = np.zeros(shape)
        elif name.endswith("_b"):
            tensors[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            tensors[name] = rng.uniform(-bound, bound, shape)
    return DenoiserParams(spec, tensors)


def _im2col(x: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (C*9, H*W) patch matrix for a padded 3x3 convolution."""
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (C, H, W, 3, 3)
    return windows.transpose(0, 3, 4, 1, 2).reshape(c * 9, h * w)


def _col2im(dcols: np.ndarray, c: int, h: int, w: int) -> np.ndarray:
    """Adjoint of _im2col: scatter patch gradients back to the input grid."""
    d = dcols.reshape(c, 3, 3, h, w)
    dxp = np.zeros((c, h + 2, w + 2))
    for dy in range(3):
        for dx in range(3):
            dxp[:, dy:dy + h, dx:dx + w] += d[:, dy, dx]
    return dxp[:, 1:-1, 1:-1]


def _conv(weight: np.ndarray, cols: np.ndarray, bias: np.ndarray, h: int, w: int):
    out = weight.reshape(weight.shape[0], -1) @ cols + bias[:, None]
    return out.reshape(weight.shape[0], h, w)


def _assemble_input(spec: DenoiserSpec, x_t, control):
    x_t = np.asarray(x_t, np.float64)
    if x_t.shape[0] != spec.image_channels:
        raise ValueError(f"expected {spec.image_channels} image channels, got {x_t.shape[0]}")
    if spec.control_channels == 0:
        return x_t
    if control is None:
        control = np.zeros((spec.control_channels,) + x_t.shape[1:])
    control = np.asarray(control, np.float64)
    if control.shape != (spec.control_channels,) + x_t.shape[1:]:
        raise ValueError(f"control shape {control.shape} incompatible with {x_t.shape}")
    return np.concatenate([x_t, control], axis=0)


def forward(params: DenoiserParams, x_t, t: int, cond_embedding=None,
            control_image=None, cache: dict | None = None) -> np.ndarray:
    """Predict the noise component of x_t. Pass a dict as cache for backward."""
    spec = params.spec
    if not 1 <= t <= spec.T:
        raise ValueError(f"timestep {t} outside 1..{spec.T}")
    p = params.tensors
    inp = _assemble_input(spec, x_t, control_image)
    h, w = inp.shape[1:]
    if cond_embedding is None:
        cond_embedding = np.zeros(spec.cond_dim)
    cond_embedding = np.asarray(cond_embedding, np.float64)
    if cond_embedding.shape != (spec.cond_dim,):
        raise ValueError(f"condition embedding must be ({spec.cond_dim},)")

    t_emb = p["t_table"][t - 1]
    cols0 = _im2col(inp)
    z1 = _conv(p["conv1_w"], cols0, p["conv1_b"], h, w)
    z1 += (p["t_proj"] @ t_emb)[:, None, None]
    z1 += (p["cond_proj1"] @ cond_embedding)[:, None, None]
    a1 = z1 if spec.linear else np.tanh(z1)
    cols1 = _im2col(a1)
    z2 = _conv(p["conv2_w"], cols1, p["conv2_b"], h, w)
    z2 += (p["cond_proj"] @ cond_embedding)[:, None, None]
    a2 = z2 if spec.linear else np.tanh(z2)
    cols2 = _im2col(a2)
    out = _conv(p["conv3_w"], cols2, p["conv3_b"], h, w)

    if cache is not None:
        cache.update(t=t, cond_embedding=cond_embedding, cols0=cols0,
                     cols1=cols1, cols2=cols2, a1=a1, a2=a2, hw=(h, w))
    return out


def backward(params: DenoiserParams, cache: dict, dout: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss wrt every parameter, given d(loss)/d(output)."""
    spec = params.spec
    p = params.tensors
    h, w = cache["hw"]
    grads = {k: np.zeros_like(v) for k, v in p.items()}

    dflat = dout.reshape(spec.image_channels, -1)
    grads["conv3_w"] = (dflat @ cache["cols2"].T).reshape(p["conv3_w"].shape)
    grads["conv3_b"] = dflat.sum(axis=1)
    da2 = _col2im(p["conv3_w"].reshape(spec.image_channels, -1).T @ dflat,
                  spec.hidden2, h, w)
    dz2 = da2 if spec.linear else (1.0 - cache["a2"] ** 2) * da2

    dz2_sum = dz2.reshape(spec.hidden2, -1).sum(axis=1)
    grads["conv2_b"] = dz2_sum
    grads["cond_proj"] = np.outer(dz2_sum, cache["cond_embedding"])
    dflat = dz2.reshape(spec.hidden2, -1)
    grads["conv2_w"] = (dflat @ cache["cols1"].T).reshape(p["conv2_w"].shape)
    da1 = _col2im(p["conv2_w"].reshape(spec.hidden2, -1).T @ dflat,
                  spec.hidden1, h, w)
    dz1 = da1 if spec.linear else (1.0 - cache["a1"] ** 2) * da1

    dz1_sum = dz1.reshape(spec.hidden1, -1).sum(axis=1)
    grads["conv1_b"] = dz1_sum
    t_emb = p["t_table"][cache["t"] - 1]
    grads["t_proj"] = np.outer(dz1_sum, t_emb)
    grads["cond_proj1"] = np.outer(dz1_sum, cache["cond_embedding"])
    grads["t_table"][cache["t"] - 1] = p["t_proj"].T @ dz1_sum
    dflat = dz1.reshape(spec.hidden1, -1)
    grads["conv1_w"] = (dflat @ cache["cols0"].T).reshape(p["conv1_w"].shape)
    return grads


def loss_and_grads(params: DenoiserParams, x_t, t, eps, cond_embedding=None,
                   control_image=None):
    """MSE between eps and the prediction, plus its parameter gradients."""
    cache: dict = {}
    out = forward(params, x_t, t, cond_embedding, control_image, cache)
    diff = out - np.asarray(eps, np.float64)
    loss = float(np.mean(diff ** 2))
    dout = 2.0 * diff / diff.size
    return loss, backward(params, cache, dout)


class Denoiser:
    """Callable wrapper mapping a Condition to network inputs."""

    def __init__(self, params: DenoiserParams):
        self.params = params

    def inputs_for(self, cond):
        spec = self.params.spec
        if cond is None or getattr(cond, "kind", None) in (None, "unconditional"):
            return None, None
        embedding = getattr(cond, "embedding", None)
        control = getattr(cond, "control_image", None)
        if control is not None:
            control = np.asarray(control, np.float64)
            if control.ndim == 2:
                control = control[None]
            else:
                control = np.transpose(control, (2, 0, 1))
            control = control[: spec.control_channels]
        return embedding, control

    def __call__(self, x_t, t, cond):
        embedding, control = self.inputs_for(cond)
        return forward(self.params, x_t, t, embedding, control)


def train(dataset, spec: DenoiserSpec, cfg: TrainConfig, sched,
          init_seed: int | None = None, params: DenoiserParams | None = None,
          freeze: frozenset[str] = frozenset()):
    """Adam on the sampled-t, sampled-noise MSE objective.

    ``dataset`` is a list of (x0 tensor in [-1,1], Condition) pairs. Returns
    the trained parameters and the per-step loss trace. Resumable by passing
    ``params``; ``freeze`` names parameter tensors excluded from updates.
    """
    from .diffusion import q_sample

    if not dataset:
        raise ValueError("empty dataset")
    if sched.T != spec.T:
        raise ValueError(f"schedule T={sched.T} does not match spec T={spec.T}")
    if params is None:
        params = init_params(spec, cfg.seed if init_seed is None else init_seed)
    else:
        params = params.copy()
    rng = np.random.default_rng(cfg.seed)
    denoiser = Denoiser(params)
    m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    v = {k: np.zeros_like(val) for k, val in params.tensors.items()}
    trace = []

    for step in range(1, cfg.steps + 1):
        idx = rng.integers(0, len(dataset), cfg.batch_size)
        ts = rng.integers(1, sched.T + 1, cfg.batch_size)
        drop = rng.random(cfg.batch_size) < cfg.cond_dropout
        batch_loss = 0.0
        batch_grads = {k: np.zeros_like(val) for k, val in params.tensors.items()}
        for j in range(cfg.batch_size):
            x0, cond = dataset[int(idx[j])]
            eps = rng.standard_normal(x0.shape)
            embedding, control = denoiser.inputs_for(None if drop[j] else cond)
            x_t = q_sample(x0, int(ts[j]), eps, sched)
            loss, grads = loss_and_grads(params, x_t, int(ts[j]), eps,
                                         embedding, control)
            batch_loss += loss
            for k in batch_grads:
                batch_grads[k] += grads[k]
        trace.append(batch_loss / cfg.batch_size)

        bc1 = 1.0 - cfg.beta1 ** step
        bc2 = 1.0 - cfg.beta2 ** step
        for k, g in batch_grads.items():
            if k in freeze:
                continue
            g = g / cfg.batch_size
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g ** 2
            params.tensors[k] -= (cfg.learning_rate * (m[k] / bc1)
                                  / (np.sqrt(v[k] / bc2) + cfg.adam_eps))
    return params, trace


def save_params(params: DenoiserParams, path) -> None:
    """Versioned binary: magic, spec fields, spec hash, float32 LE tensors."""
    spec = params.spec
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H8HQ", FILE_VERSION, spec.image_channels,
                            spec.control_channels, spec.hidden1, spec.hidden2,
                            spec.cond_dim, spec.t_dim, spec.T,
                            int(spec.linear), spec.hash()))
        for name in spec.shapes():
            f.write(params.tensors[name].astype("<f4").tobytes())


def load_params(path) -> DenoiserParams:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a denoiser parameter file")
    version, *fields, linear, stored_hash = struct.unpack("<H8HQ", data[4:30])
    if version != FILE_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    spec = DenoiserSpec(*fields, linear=bool(linear))
    if spec.hash() != stored_hash:
        raise ValueError(f"{path}: spec hash mismatch")
    tensors = {}
    offset = 30
    for name, shape in spec.shapes().items():
        count = int(np.prod(shape))
        arr = np.frombuffer(data[offset:offset + 4 * count], "<f4")
        if len(arr) != count:
            raise ValueError(f"{path}: truncated tensor {name}")
        tensors[name] = arr.astype(np.float64).reshape(shape)
        offset += 4 * count
    return DenoiserParams(spec, tensors)


def write_loss_csv(trace, path) -> None:
    with open(path, "w") as f:
        f.write("step,loss\n")
        for i, loss in enumerate(trace, 1):
            f.write(f"{i},{loss!r}\n")
