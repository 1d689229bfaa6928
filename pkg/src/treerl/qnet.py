"""MLP Q-function with hand-written backprop and the Q-learning update.

Layers are affine maps ``x @ W + b`` with rectifiers between them and an
identity output over the 13 actions. Everything is float64 numpy.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from treerl.geometry import NUM_ACTIONS
from treerl._io import atomic_write_bytes
from treerl.mdp import input_dim, stack_inputs

MAGIC = b"TRLQ"
VERSION = 1


class CheckpointError(ValueError):
    pass


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class UpdateConfig:
    learning_rate: float = 1e-2
    gamma: float = 0.9
    td_clip: float = 5.0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not self.td_clip > 0:
            raise ValueError("td_clip must be positive")


class QNetwork:
    def __init__(self, dims: Sequence[int], weights: list[np.ndarray], biases: list[np.ndarray]):
        self.dims = tuple(int(d) for d in dims)
        if len(weights) != len(self.dims) - 1 or len(biases) != len(weights):
            raise ValueError("need one weight matrix and bias per layer")
        for i, (W, b) in enumerate(zip(weights, biases)):
            if W.shape != (self.dims[i], self.dims[i + 1]) or b.shape != (self.dims[i + 1],):
                raise ValueError(f"layer {i} shape mismatch with dims {self.dims}")
        self.weights = [np.asarray(W, dtype=np.float64) for W in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]

    @classmethod
    def create(cls, dims: Sequence[int], rng: np.random.Generator) -> QNetwork:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(dims, weights, biases)

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> QNetwork:
        return cls(
            dims,
            [np.zeros((i, o)) for i, o in zip(dims[:-1], dims[1:])],
            [np.zeros(o) for o in dims[1:]],
        )

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    def copy(self) -> QNetwork:
        return QNetwork(self.dims, [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def parameters(self) -> list[np.ndarray]:
        """Parameters in checkpoint order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"input has {x.shape[-1]} features, network expects {self.input_dim}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Action values for one input vector or a batch of row vectors."""
        h = self._check_input(x)
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        # activations[i] is the input to layer i
        h = np.atleast_2d(self._check_input(x))
        activations = [h]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
                activations.append(h)
        return h, activations

    def backward(self, activations: list[np.ndarray], dout: np.ndarray) -> list[np.ndarray]:
        """Gradients of ``sum(dout * output)`` in :meth:`parameters` order."""
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))  # type: ignore[list-item]
        delta = dout
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = activations[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (activations[i] > 0)
        return grads


def td_target(r: float, next_q: np.ndarray, terminal: bool, gamma: float) -> float:
    if terminal:
        return float(r)
    return float(r + gamma * np.max(next_q))


def update_batch(
    net: QNetwork,
    batch: Sequence,
    cfg: UpdateConfig,
    target_net: QNetwork | None = None,
) -> float:
    """One SGD step on the clipped TD error of a batch of transitions.

    Bootstrap targets use ``target_net`` when given, else ``net`` itself
    before the step, and are held constant. Returns the mean squared
    clipped TD error measured before the step.
    """
    if not batch:
        raise ValueError("update_batch needs a non-empty batch")
    states = stack_inputs([t.state for t in batch])
    next_states = stack_inputs([t.next_state for t in batch])
    actions = np.fromiter((int(t.action) for t in batch), dtype=np.intp, count=len(batch))
    rewards = np.fromiter((t.reward for t in batch), dtype=np.float64, count=len(batch))
    terminal = np.fromiter((t.terminal for t in batch), dtype=bool, count=len(batch))

    bootstrap = (target_net or net).forward(next_states).max(axis=1)
    targets = np.where(terminal, rewards, rewards + cfg.gamma * bootstrap)

    q, activations = net.forward_cached(states)
    rows = np.arange(len(batch))
    td = np.clip(targets - q[rows, actions], -cfg.td_clip, cfg.td_clip)
    loss = float(np.mean(td**2))
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite TD loss {loss}")

    dout = np.zeros_like(q)
    dout[rows, actions] = td / len(batch)
    grads = net.backward(activations, dout)
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise TrainingDiverged("non-finite gradient")
    for p, g in zip(net.parameters(), grads):
        p += cfg.learning_rate * g
    return loss


def grad_check(net: QNetwork, x: np.ndarray, action: int, h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences of Q(x, action)."""
    _, activations = net.forward_cached(x)
    dout = np.zeros((1, net.dims[-1]))
    dout[0, action] = 1.0
    analytic = net.backward(activations, dout)
    worst = 0.0
    for p, g in zip(net.parameters(), analytic):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            plus = net.forward(x)[action]
            flat[j] = orig - h
            minus = net.forward(x)[action]
            flat[j] = orig
            numeric = (plus - minus) / (2 * h)
            scale = max(abs(numeric), abs(gflat[j]))
            if scale > 0:
                worst = max(worst, abs(numeric - gflat[j]) / scale)
    return worst


def default_dims(feature_dim: int, hidden: Sequence[int] = (256, 128)) -> tuple[int, ...]:
    return (input_dim(feature_dim), *hidden, NUM_ACTIONS)


def to_bytes(net: QNetwork) -> bytes:
    header = MAGIC + bytes([VERSION]) + struct.pack(f"<{len(net.dims) + 1}I", len(net.dims) - 1, *net.dims)
    payload = b"".join(p.astype("<f8").tobytes(order="C") for p in net.parameters())
    return header + payload


def from_bytes(data: bytes) -> QNetwork:
    if len(data) < 9 or data[:4] != MAGIC:
        raise CheckpointError("not a Q-network checkpoint (bad magic)")
    if data[4] != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {data[4]}")
    (layers,) = struct.unpack_from("<I", data, 5)
    if not 1 <= layers <= 64:
        raise CheckpointError(f"implausible layer count {layers}")
    offset = 9 + 4 * (layers + 1)
    if len(data) < offset:
        raise CheckpointError("truncated checkpoint header")
    dims = struct.unpack_from(f"<{layers + 1}I", data, 9)
    n_params = sum(i * o + o for i, o in zip(dims[:-1], dims[1:]))
    if len(data) - offset != 8 * n_params:
        raise CheckpointError(
            f"payload holds {(len(data) - offset) / 8:g} values, header dims {dims} need {n_params}"
        )
    values = np.frombuffer(data, dtype="<f8", offset=offset).astype(np.float64)
    weights, biases, pos = [], [], 0
    for i, o in zip(dims[:-1], dims[1:]):
        weights.append(values[pos : pos + i * o].reshape(i, o).copy())
        pos += i * o
        biases.append(values[pos : pos + o].copy())
        pos += o
    return QNetwork(dims, weights, biases)


def save(net: QNetwork, path: str | os.PathLike) -> None:
    atomic_write_bytes(path, to_bytes(net))


def load(path: str | os.PathLike) -> QNetwork:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
