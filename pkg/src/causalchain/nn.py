"""Numerical substrate: init, Adam, gradient clipping, grad checking,
and a self-describing checkpoint container.

Tensors are torch CPU tensors; 32-bit for training, 64-bit for gradient
checking (finite differences are unreliable at 32-bit).
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import torch

from .errors import NonFiniteGradient, NonFiniteLoss

_CKPT_MAGIC = b"CCKP\x01"
_DTYPES = {"float32": torch.float32, "float64": torch.float64, "int64": torch.int64}


def _derive_seed(seed: int, name: str, shape: Sequence[int]) -> int:
    digest = hashlib.blake2b(
        f"{seed}|{name}|{tuple(shape)}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little") & 0x7FFF_FFFF_FFFF_FFFF


def xavier_init(
    shape: Sequence[int],
    seed: int,
    name: str = "",
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Uniform Xavier/Glorot init in [-a, a], a = sqrt(6 / (fan_in + fan_out)).

    Deterministic per (shape, seed, name).
    """
    shape = tuple(shape)
    if any(d <= 0 for d in shape):
        raise ValueError(f"invalid shape {shape}")
    if len(shape) >= 2:
        fan_out = shape[0]
        fan_in = math.prod(shape[1:])
    else:
        fan_in = fan_out = shape[0]
    a = math.sqrt(6.0 / (fan_in + fan_out))
    gen = torch.Generator().manual_seed(_derive_seed(seed, name, shape))
    return (torch.rand(shape, generator=gen, dtype=dtype) * 2.0 - 1.0) * a


@dataclass
class AdamState:
    """Per-parameter first/second moments plus the shared step count."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)


def adam_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: AdamState,
) -> tuple[dict[str, torch.Tensor], AdamState]:
    """One bias-corrected Adam update, in place on the parameter tensors."""
    for name, g in grads.items():
        if not torch.isfinite(g).all():
            raise NonFiniteGradient(f"non-finite gradient for {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    with torch.no_grad():
        for name, g in grads.items():
            p = params[name]
            if name not in state.m:
                state.m[name] = torch.zeros_like(p)
                state.v[name] = torch.zeros_like(p)
            m, v = state.m[name], state.v[name]
            m.mul_(b1).add_(g, alpha=1.0 - b1)
            v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
            p.addcdiv_(m / bc1, (v / bc2).sqrt().add_(state.epsilon), value=-state.lr)
    return params, state


def clip_gradients(
    grads: dict[str, torch.Tensor], max_norm: float = 5.0
) -> tuple[dict[str, torch.Tensor], float]:
    """Scale all gradients by max_norm/g when the global L2 norm g exceeds it.

    Returns (grads, global_norm_before_clipping). In place.
    """
    total = 0.0
    for g in grads.values():
        total += float((g.double() ** 2).sum())
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        with torch.no_grad():
            for g in grads.values():
                g.mul_(scale)
    return grads, norm


def grad_check(
    loss_fn: Callable[[dict[str, torch.Tensor]], torch.Tensor],
    params: dict[str, torch.Tensor],
    eps: float = 1e-4,
    max_coords: Optional[int] = 400,
    seed: int = 0,
) -> float:
    """Compare autograd gradients of loss_fn against central differences.

    Params must be float64 leaf tensors with requires_grad. Checks every
    coordinate up to max_coords, otherwise a deterministic sample of at
    least 100 coordinates spread across parameters. Returns the max of
    |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
    """
    loss = loss_fn(params)
    if not torch.isfinite(loss):
        raise NonFiniteLoss(f"loss is {float(loss)}")
    names = sorted(params)
    analytic = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    analytic = {
        n: (g if g is not None else torch.zeros_like(params[n]))
        for n, g in zip(names, analytic)
    }

    coords: list[tuple[str, int]] = []
    for n in names:
        coords.extend((n, i) for i in range(params[n].numel()))
    if max_coords is not None and len(coords) > max_coords:
        budget = max(100, max_coords)
        gen = torch.Generator().manual_seed(seed)
        picks = torch.randperm(len(coords), generator=gen)[:budget]
        coords = [coords[int(i)] for i in picks]

    worst = 0.0
    with torch.no_grad():
        for name, flat_idx in coords:
            p = params[name]
            view = p.view(-1)
            orig = float(view[flat_idx])
            view[flat_idx] = orig + eps
            up = float(loss_fn(params))
            view[flat_idx] = orig - eps
            down = float(loss_fn(params))
            view[flat_idx] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise NonFiniteLoss(f"non-finite loss while perturbing {name}[{flat_idx}]")
            g_fd = (up - down) / (2.0 * eps)
            g_a = float(analytic[name].view(-1)[flat_idx])
            err = abs(g_a - g_fd) / max(1e-8, abs(g_a) + abs(g_fd))
            worst = max(worst, err)
    return worst


# ----------------------------------------------------------------- checkpoint


def save_checkpoint(
    path: str | Path, tensors: dict[str, torch.Tensor], config: dict
) -> None:
    """Write a versioned container: magic, JSON header, raw little-endian data."""
    manifest = []
    blobs = []
    for name in sorted(tensors):
        t = tensors[name].detach().contiguous().cpu()
        dtype = str(t.dtype).removeprefix("torch.")
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported dtype {dtype} for {name}")
        manifest.append({"name": name, "shape": list(t.shape), "dtype": dtype})
        blobs.append(t.numpy().tobytes())
    header = json.dumps({"config": config, "tensors": manifest}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, torch.Tensor], dict]:
    import numpy as np

    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        tensors: dict[str, torch.Tensor] = {}
        for entry in header["tensors"]:
            dtype = _DTYPES[entry["dtype"]]
            shape = entry["shape"]
            count = math.prod(shape) if shape else 1
            np_dtype = {"float32": "<f4", "float64": "<f8", "int64": "<i8"}[entry["dtype"]]
            raw = fh.read(count * np.dtype(np_dtype).itemsize)
            arr = np.frombuffer(raw, dtype=np_dtype).reshape(shape).copy()
            tensors[entry["name"]] = torch.from_numpy(arr).to(dtype)
    return tensors, header["config"]
