"""Layers, the Adam optimizer, and the binary checkpoint container.

Modules own their parameters as requires_grad Tensors and register them by
attribute introspection, so `named_parameters` yields stable dotted names
("encoder.blocks.2.conv.weight") that double as checkpoint keys.
"""

from __future__ import annotations

import json
import struct
from typing import Iterable, Iterator, Optional

import numpy as np

from . import tensor as T
from .errors import ConfigMismatch, IoError
from .tensor import Tensor

CKPT_MAGIC = b"SDCK"
CKPT_VERSION = 1


class Module:
    """Base class; parameters and submodules are discovered from attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, val in vars(self).items():
            if isinstance(val, Tensor):
                if val.requires_grad:
                    yield prefix + name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{name}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{prefix}{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())


def kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int,
                    dtype=np.float32) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0,
                 bias: bool = True, dtype=np.float32):
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size
        self.weight = T.tensor(
            kaiming_uniform(rng, (out_channels, in_channels, kernel_size), fan_in, dtype),
            requires_grad=True)
        self.bias = T.tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0,
                 output_padding: int = 0, bias: bool = True, dtype=np.float32):
        self.stride = stride
        self.padding = padding
        self.output_padding = output_padding
        fan_in = in_channels * kernel_size
        self.weight = T.tensor(
            kaiming_uniform(rng, (in_channels, out_channels, kernel_size), fan_in, dtype),
            requires_grad=True)
        self.bias = T.tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv_transpose1d(x, self.weight, self.bias, stride=self.stride,
                                  padding=self.padding, output_padding=self.output_padding)


class Snake(Module):
    """x + sin^2(alpha x)/alpha with one learnable alpha per channel."""

    def __init__(self, channels: int, dtype=np.float32):
        self.alpha = T.tensor(np.ones(channels, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.snake(x, self.alpha)


class Tanh(Module):
    def __call__(self, x: Tensor) -> Tensor:
        return T.tanh(x)


class LeakyReLU(Module):
    def __init__(self, slope: float = 0.1):
        self.slope = slope

    def __call__(self, x: Tensor) -> Tensor:
        return T.leaky_relu(x, self.slope)


class Adam:
    """Adam with bias correction; state arrays match each parameter's dtype."""

    def __init__(self, params: Iterable[Tensor], lr: float = 1e-4,
                 betas: tuple[float, float] = (0.8, 0.99), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


# -- checkpoint container -----------------------------------------------------
#
# Layout, little-endian throughout:
#   magic "SDCK" | u16 version | u32 manifest length | manifest JSON (utf-8)
#   u32 param count, then per parameter:
#     u16 name length | name utf-8 | u8 ndim | u32 x ndim dims | float32 data


def save_checkpoint(path, manifest: dict, params: dict[str, np.ndarray]) -> None:
    try:
        with open(path, "wb") as f:
            f.write(CKPT_MAGIC)
            f.write(struct.pack("<H", CKPT_VERSION))
            blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
            f.write(struct.pack("<I", len(blob)))
            f.write(blob)
            f.write(struct.pack("<I", len(params)))
            for name, arr in params.items():
                nb = name.encode("utf-8")
                f.write(struct.pack("<H", len(nb)))
                f.write(nb)
                f.write(struct.pack("<B", arr.ndim))
                f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise IoError("truncated checkpoint file")
    return buf


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    with f:
        if _read_exact(f, 4) != CKPT_MAGIC:
            raise IoError(f"{path} is not a checkpoint file")
        (version,) = struct.unpack("<H", _read_exact(f, 2))
        if version != CKPT_VERSION:
            raise IoError(f"unsupported checkpoint version {version}")
        (mlen,) = struct.unpack("<I", _read_exact(f, 4))
        manifest = json.loads(_read_exact(f, mlen).decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(f, 2))
            name = _read_exact(f, nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(f, 1))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim))
            nbytes = 4 * int(np.prod(shape, dtype=np.int64)) if ndim else 4
            data = np.frombuffer(_read_exact(f, nbytes), dtype="<f4").reshape(shape)
            params[name] = data.copy()
    return manifest, params


def load_into(module: Module, params: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into a module; shapes must match exactly."""
    own = dict(module.named_parameters())
    missing = sorted(set(own) - set(params))
    extra = sorted(set(params) - set(own))
    if missing or extra:
        raise ConfigMismatch(f"parameter names disagree (missing {missing[:3]}, extra {extra[:3]})")
    for name, p in own.items():
        arr = params[name]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise ConfigMismatch(f"{name}: checkpoint shape {arr.shape} vs model {p.data.shape}")
        p.data[...] = arr.astype(p.data.dtype)
