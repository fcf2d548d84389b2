"""Fully connected tanh network ``t -> (s, e, i, r, d)`` with a hand-written tape.

The computation is a fixed layered MLP, so reverse mode is written out layer
by layer instead of going through a general expression graph.  Parameters
live in one flat vector; per-layer weights and biases are views into it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.special import expit

from fracpinn.errors import ConsistencyError

CHECKPOINT_MAGIC = b"FRACPINN-CKPT-1\n"
HEADS = ("softmax", "softplus")


def _layout(layer_dims: tuple[int, ...]) -> list[tuple[slice, tuple[int, int], slice]]:
    out = []
    pos = 0
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        w = slice(pos, pos + fan_in * fan_out)
        pos = w.stop
        b = slice(pos, pos + fan_out)
        pos = b.stop
        out.append((w, (fan_in, fan_out), b))
    return out


@dataclass
class Network:
    """MLP with weight matrices stored as ``(fan_in, fan_out)``."""

    layer_dims: tuple[int, ...]
    head: Literal["softmax", "softplus"] = "softmax"
    theta: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or self.layer_dims[0] != 1 or self.layer_dims[-1] != 5:
            raise ConsistencyError(f"layer dims must run 1 -> ... -> 5, got {self.layer_dims}")
        if any(d < 1 for d in self.layer_dims):
            raise ConsistencyError("every layer needs at least one unit")
        if self.head not in HEADS:
            raise ConsistencyError(f"unknown output head {self.head!r}")
        self._layout = _layout(self.layer_dims)
        size = self._layout[-1][2].stop
        if self.theta is None:
            self.theta = np.zeros(size)
        else:
            self.theta = np.array(self.theta, dtype=float)
            if self.theta.shape != (size,):
                raise ConsistencyError(f"expected {size} parameters, got {self.theta.shape}")

    @property
    def size(self) -> int:
        return len(self.theta)

    @property
    def weights(self) -> list[np.ndarray]:
        return [self.theta[w].reshape(shape) for w, shape, _ in self._layout]

    @property
    def biases(self) -> list[np.ndarray]:
        return [self.theta[b] for _, _, b in self._layout]

    def weight_mask(self) -> np.ndarray:
        """Boolean mask over ``theta`` selecting weight entries (not biases)."""
        mask = np.zeros(self.size, dtype=bool)
        for w, _, _ in self._layout:
            mask[w] = True
        return mask

    def copy(self) -> "Network":
        return Network(self.layer_dims, self.head, self.theta.copy())


def init_xavier(layer_dims, seed: int, head: str = "softmax") -> Network:
    """Glorot-uniform weights, zero biases, reproducible from ``seed``."""
    net = Network(tuple(layer_dims), head)
    rng = np.random.default_rng(seed)
    for w, (fan_in, fan_out), _ in net._layout:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        net.theta[w] = rng.uniform(-bound, bound, size=fan_in * fan_out)
    return net


@dataclass
class Tape:
    """Activations recorded by :func:`forward` for one reverse sweep."""

    theta_id: int
    theta_version: bytes
    inputs: np.ndarray
    hidden: list[np.ndarray]
    logits: np.ndarray
    outputs: np.ndarray
    used: bool = False


def _fingerprint(net: Network) -> bytes:
    # cheap identity check that the weights were not changed between passes
    return net.theta[:: max(1, net.size // 64)].tobytes()


def forward(net: Network, t_scaled) -> tuple[np.ndarray, Tape]:
    """Evaluate the network on scaled times in ``[0, 1]``.

    Returns outputs of shape ``(B, 5)`` (or ``(5,)`` for a scalar input) and
    the tape needed by :func:`backward`.
    """
    scalar = np.ndim(t_scaled) == 0
    inputs = np.atleast_1d(np.asarray(t_scaled, dtype=float)).reshape(-1, 1)
    a = inputs
    ws, bs = net.weights, net.biases
    hidden = []
    for w, b in zip(ws[:-1], bs[:-1]):
        a = np.tanh(a @ w + b)
        hidden.append(a)
    z = a @ ws[-1] + bs[-1]
    if net.head == "softmax":
        e = np.exp(z - z.max(axis=1, keepdims=True))
        y = e / e.sum(axis=1, keepdims=True)
    else:
        y = np.logaddexp(0.0, z)
    tape = Tape(id(net), _fingerprint(net), inputs, hidden, z, y)
    return (y[0] if scalar else y), tape


def backward(net: Network, tape: Tape, output_cotangent) -> tuple[np.ndarray, np.ndarray]:
    """Reverse sweep.

    Returns ``(grad_theta, grad_t)``: the flat parameter gradient (summed over
    the batch) and the per-sample derivative with respect to the scaled input.
    """
    if tape.theta_id != id(net) or tape.theta_version != _fingerprint(net):
        raise ConsistencyError("tape was recorded with a different network state")
    if tape.used:
        raise ConsistencyError("tape already consumed by a reverse sweep")
    tape.used = True
    g = np.asarray(output_cotangent, dtype=float).reshape(tape.outputs.shape)
    y, z = tape.outputs, tape.logits
    if net.head == "softmax":
        gz = y * (g - np.sum(g * y, axis=1, keepdims=True))
    else:
        gz = g * expit(z)

    ws = net.weights
    grad = np.zeros(net.size)
    acts = [tape.inputs] + tape.hidden
    for layer in range(len(ws) - 1, -1, -1):
        w_sl, shape, b_sl = net._layout[layer]
        a_in = acts[layer]
        grad[w_sl] = (a_in.T @ gz).ravel()
        grad[b_sl] = gz.sum(axis=0)
        ga = gz @ ws[layer].T
        if layer > 0:
            gz = ga * (1.0 - a_in**2)
    return grad, ga[:, 0]


def save_checkpoint(path: str | Path, net: Network, raw: np.ndarray) -> None:
    """Write a versioned binary checkpoint: dims, head, theta, raw params."""
    raw = np.asarray(raw, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(net.layer_dims)))
        fh.write(struct.pack(f"<{len(net.layer_dims)}I", *net.layer_dims))
        head = net.head.encode()
        fh.write(struct.pack("<I", len(head)) + head)
        fh.write(struct.pack("<Q", net.size))
        fh.write(net.theta.astype("<f8").tobytes())
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw.tobytes())


def load_checkpoint(path: str | Path) -> tuple[Network, np.ndarray]:
    blob = Path(path).read_bytes()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise ConsistencyError(f"{path}: not a FRACPINN-CKPT-1 checkpoint")
    pos = len(CHECKPOINT_MAGIC)

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, blob, pos)
        pos += struct.calcsize(fmt)
        return vals

    (n_dims,) = take("<I")
    dims = take(f"<{n_dims}I")
    (head_len,) = take("<I")
    head = blob[pos : pos + head_len].decode()
    pos += head_len
    (size,) = take("<Q")
    theta = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).copy()
    pos += 8 * size
    (n_raw,) = take("<I")
    raw = np.frombuffer(blob, dtype="<f8", count=n_raw, offset=pos).copy()
    return Network(dims, head, theta), raw
