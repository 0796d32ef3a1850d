"""LSTM network types and the reference (oracle) inference engine.

The functions here define the numerical ground truth the hardware model is
checked against.  Accumulation order is part of the contract: every gate
preactivation is built per neuron as

    forward dot (columns in ascending index order)
    + recurrent dot (ascending index order)
    + peephole term (if any)
    + bias

with one floating-point addition per step, so that an independently written
triple-loop evaluator and the cycle-level datapath produce bit-identical
results in exact mode.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

GATES = ("input", "forget", "cell_updater", "output")
#: gates whose preactivation includes a peephole term (the cell-updater
#: equation has none)
PEEPHOLE_GATES = ("input", "forget", "output")


class ShapeError(ValueError):
    """Dimension mismatch between weights, inputs or layer descriptors."""


class NumericError(ValueError):
    """Non-finite value where finite data is required."""


class Precision(str, Enum):
    fp32 = "fp32"
    fp16 = "fp16"

    @property
    def storage_dtype(self) -> np.dtype:
        return np.dtype(np.float16 if self is Precision.fp16 else np.float32)

    @property
    def elem_bytes(self) -> int:
        return self.storage_dtype.itemsize


class Direction(str, Enum):
    forward_only = "forward_only"
    bidirectional = "bidirectional"


# Dot products accumulate in single precision in both modes; fp16 only
# narrows storage of weights and activations.
ACC_DTYPE = np.float32


@dataclass(frozen=True)
class LayerDescriptor:
    hidden_size: int
    input_size: int
    direction: Direction = Direction.forward_only
    peephole: bool = False

    def __post_init__(self):
        if self.hidden_size <= 0 or self.input_size <= 0:
            raise ShapeError(
                f"layer dimensions must be positive, got hidden={self.hidden_size} "
                f"input={self.input_size}"
            )

    @property
    def num_directions(self) -> int:
        return 2 if self.direction is Direction.bidirectional else 1

    @property
    def output_size(self) -> int:
        """Width of the frame this layer emits (concatenated if bidirectional)."""
        return self.hidden_size * self.num_directions


@dataclass(frozen=True)
class NetworkDescriptor:
    layers: tuple[LayerDescriptor, ...]
    input_dim: int
    numeric_precision: Precision = Precision.fp32

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("network needs at least one layer")
        if self.input_dim <= 0:
            raise ShapeError("input_dim must be positive")
        object.__setattr__(self, "layers", tuple(self.layers))
        expected = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.input_size != expected:
                raise ShapeError(
                    f"layer {i} expects input_size={layer.input_size}, but the "
                    f"preceding layer produces {expected}"
                )
            expected = layer.output_size

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_size


def _as_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")
    return arr


@dataclass
class GateParams:
    """Weights of one gate: forward matrix, recurrent matrix, bias, peephole."""

    w_x: np.ndarray  # [hidden, input_size]
    w_h: np.ndarray  # [hidden, hidden]
    bias: np.ndarray  # [hidden]
    peephole: np.ndarray | None = None  # [hidden]


class WeightSet:
    """All four gates of one LSTM cell (one direction of one layer)."""

    def __init__(self, layer: LayerDescriptor, gates: dict[str, GateParams],
                 precision: Precision = Precision.fp32):
        self.layer = layer
        self.precision = precision
        self.gates: dict[str, GateParams] = {}
        h, nx = layer.hidden_size, layer.input_size
        dt = precision.storage_dtype
        for g in GATES:
            if g not in gates:
                raise ShapeError(f"missing gate '{g}'")
            p = gates[g]
            w_x = _as_finite(f"{g}.w_x", np.asarray(p.w_x, dtype=dt))
            w_h = _as_finite(f"{g}.w_h", np.asarray(p.w_h, dtype=dt))
            bias = _as_finite(f"{g}.bias", np.asarray(p.bias, dtype=dt))
            if w_x.shape != (h, nx):
                raise ShapeError(f"{g}.w_x has shape {w_x.shape}, want {(h, nx)}")
            if w_h.shape != (h, h):
                raise ShapeError(f"{g}.w_h has shape {w_h.shape}, want {(h, h)}")
            if bias.shape != (h,):
                raise ShapeError(f"{g}.bias has shape {bias.shape}, want {(h,)}")
            peep = None
            if p.peephole is not None:
                if g == "cell_updater":
                    raise ShapeError("cell_updater gate takes no peephole vector")
                if not layer.peephole:
                    raise ShapeError("peephole vector on a non-peephole layer")
                peep = _as_finite(f"{g}.peephole", np.asarray(p.peephole, dtype=dt))
                if peep.shape != (h,):
                    raise ShapeError(f"{g}.peephole has shape {peep.shape}, want {(h,)}")
            elif layer.peephole and g != "cell_updater":
                raise ShapeError(f"peephole layer is missing the {g} peephole vector")
            self.gates[g] = GateParams(w_x, w_h, bias, peep)
        self._stacked: tuple | None = None

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """fp32 views of the four gates stacked row-wise, gate order as GATES.

        Stacking is a pure row concatenation: per-row accumulation order is
        unchanged, so results are bit-identical to per-gate evaluation.
        """
        if self._stacked is None:
            wx = np.concatenate([self.gates[g].w_x for g in GATES]).astype(ACC_DTYPE)
            wh = np.concatenate([self.gates[g].w_h for g in GATES]).astype(ACC_DTYPE)
            b = np.concatenate([self.gates[g].bias for g in GATES]).astype(ACC_DTYPE)
            self._stacked = (np.ascontiguousarray(wx), np.ascontiguousarray(wh), b)
        return self._stacked

    def peephole_f32(self, gate: str) -> np.ndarray | None:
        p = self.gates[gate].peephole
        return None if p is None else p.astype(ACC_DTYPE)


@dataclass
class CellState:
    c: np.ndarray
    h: np.ndarray


def zero_state(hidden_size: int, precision: Precision = Precision.fp32) -> CellState:
    dt = precision.storage_dtype
    return CellState(np.zeros(hidden_size, dtype=dt), np.zeros(hidden_size, dtype=dt))


@dataclass
class Sequence:
    """Ordered input frames, shape [T, dim]."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ShapeError(f"sequence must be [T>=1, dim], got {self.frames.shape}")
        _as_finite("sequence", self.frames)

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


# ---------------------------------------------------------------------------
# accumulation primitives (the order contract lives here)

def accumulate_dot(acc: np.ndarray, mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """acc[j] += mat[j, k] * vec[k] for k ascending, one fp32 add per step.

    Vectorized over rows only; the per-row scalar operation sequence matches
    a naive loop exactly, so results are bit-identical to one.
    """
    for k in range(vec.shape[0]):
        acc += mat[:, k] * vec[k]
    return acc


def accumulate_dot_all_t(acc: np.ndarray, mat: np.ndarray, frames: np.ndarray) -> np.ndarray:
    """Batched form of accumulate_dot: acc[j, t] += mat[j, k] * frames[t, k].

    Same per-(row, t) scalar order as accumulate_dot; only the python loop
    count changes.
    """
    for k in range(frames.shape[1]):
        acc += mat[:, k, None] * frames[:, k][None, :]
    return acc


def sigmoid(x: np.ndarray) -> np.ndarray:
    # composed from exp exactly like the datapath evaluates it; saturates
    # cleanly to 0.0 / 1.0 for large |x| (the exp overflow is the saturation)
    one = ACC_DTYPE(1.0)
    with np.errstate(over="ignore"):
        return one / (one + np.exp(-x))


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def _upcast(vec: np.ndarray) -> np.ndarray:
    return vec.astype(ACC_DTYPE) if vec.dtype != ACC_DTYPE else vec


# ---------------------------------------------------------------------------
# operations

def gate_preactivation(weights: WeightSet, gate: str, x_t: np.ndarray,
                       h_prev: np.ndarray, c_prev: np.ndarray | None = None) -> np.ndarray:
    """Preactivation of one gate: W_gx.x_t + W_gh.h_prev + peephole + bias.

    ``c_prev`` is the cell state the gate's peephole taps (the previous state
    for input/forget, the freshly updated one for the output gate).  It is
    only read when the gate has a peephole vector.
    """
    if gate not in GATES:
        raise ShapeError(f"unknown gate {gate!r}")
    p = weights.gates[gate]
    x_t = _upcast(_as_finite("x_t", np.asarray(x_t)))
    h_prev = _upcast(_as_finite("h_prev", np.asarray(h_prev)))
    if x_t.shape != (weights.layer.input_size,):
        raise ShapeError(f"x_t has shape {x_t.shape}, want ({weights.layer.input_size},)")
    if h_prev.shape != (weights.layer.hidden_size,):
        raise ShapeError(f"h_prev has shape {h_prev.shape}, want ({weights.layer.hidden_size},)")
    acc = np.zeros(weights.layer.hidden_size, dtype=ACC_DTYPE)
    accumulate_dot(acc, _upcast(p.w_x), x_t)
    accumulate_dot(acc, _upcast(p.w_h), h_prev)
    if p.peephole is not None:
        if c_prev is None:
            raise ShapeError(f"{gate} gate has a peephole but no cell state was given")
        acc += _upcast(p.peephole) * _upcast(np.asarray(c_prev))
    acc += _upcast(p.bias)
    return acc


def cell_step(weights: WeightSet, x_t: np.ndarray, prev: CellState) -> CellState:
    """One timestep of one cell; returns the new (c_t, h_t)."""
    h = weights.layer.hidden_size
    x32 = _upcast(_as_finite("x_t", np.asarray(x_t)))
    h32 = _upcast(np.asarray(prev.h))
    c32 = _upcast(np.asarray(prev.c))

    wx, wh, bias = weights.stacked()
    pre = np.zeros(4 * h, dtype=ACC_DTYPE)
    accumulate_dot(pre, wx, x32)
    accumulate_dot(pre, wh, h32)
    return finish_step(weights, pre, c32)


def finish_step(weights: WeightSet, pre: np.ndarray, c_prev32: np.ndarray) -> CellState:
    """Apply peepholes, biases and activations to stacked dot-product results."""
    h = weights.layer.hidden_size
    _, _, bias = weights.stacked()
    pre_i = pre[0:h].copy()
    pre_f = pre[h:2 * h].copy()
    pre_g = pre[2 * h:3 * h].copy()
    pre_o = pre[3 * h:4 * h].copy()

    if weights.layer.peephole:
        pre_i += weights.peephole_f32("input") * c_prev32
        pre_f += weights.peephole_f32("forget") * c_prev32
    i_t = sigmoid(pre_i + bias[0:h])
    f_t = sigmoid(pre_f + bias[h:2 * h])
    g_t = tanh(pre_g + bias[2 * h:3 * h])
    c_t = f_t * c_prev32 + i_t * g_t
    if weights.layer.peephole:
        pre_o += weights.peephole_f32("output") * c_t
    o_t = sigmoid(pre_o + bias[3 * h:4 * h])
    h_t = o_t * tanh(c_t)

    dt = weights.precision.storage_dtype
    return CellState(c_t.astype(dt), h_t.astype(dt))


def _run_direction(weights: WeightSet, frames: np.ndarray) -> np.ndarray:
    """Run one cell over frames [T, input_size]; returns h outputs [T, hidden].

    The forward dot products are hoisted out of the time loop (they have no
    sequential dependence); per-scalar accumulation order is identical to the
    per-timestep loop, so the hoist does not change a single bit.
    """
    layer = weights.layer
    T = frames.shape[0]
    h = layer.hidden_size
    wx, wh, _ = weights.stacked()
    frames32 = _upcast(frames)

    fwd = np.zeros((4 * h, T), dtype=ACC_DTYPE)
    accumulate_dot_all_t(fwd, wx, frames32)

    state = zero_state(h, weights.precision)
    out = np.empty((T, h), dtype=weights.precision.storage_dtype)
    for t in range(T):
        pre = fwd[:, t].copy()
        accumulate_dot(pre, wh, _upcast(state.h))
        state = finish_step(weights, pre, _upcast(state.c))
        out[t] = state.h
    return out


def layer_infer(layer: LayerDescriptor, weights: list[WeightSet],
                inp: Sequence) -> Sequence:
    """Run one layer; bidirectional layers concatenate fwd and bwd outputs."""
    if inp.dim != layer.input_size:
        raise ShapeError(f"input dim {inp.dim} != layer input_size {layer.input_size}")
    if len(weights) != layer.num_directions:
        raise ShapeError(f"layer wants {layer.num_directions} weight sets, got {len(weights)}")
    for ws in weights:
        if ws.layer != layer:
            raise ShapeError("weight set does not match the layer descriptor")
    fwd = _run_direction(weights[0], inp.frames)
    if layer.direction is Direction.forward_only:
        return Sequence(fwd)
    bwd = _run_direction(weights[1], inp.frames[::-1])
    # bwd[i] belongs to input frame T-1-i; flip back to frame order
    return Sequence(np.concatenate([fwd, bwd[::-1]], axis=1))


def network_infer(net: NetworkDescriptor, weights: "NetworkWeights",
                  inp: Sequence) -> Sequence:
    """Fold layer_infer over the stack; returns the last hidden layer's output."""
    if inp.dim != net.input_dim:
        raise ShapeError(f"input dim {inp.dim} != network input_dim {net.input_dim}")
    seq = inp
    for i, layer in enumerate(net.layers):
        try:
            seq = layer_infer(layer, weights.layers[i], seq)
        except (ShapeError, NumericError) as e:
            raise type(e)(f"layer {i}: {e}") from e
    return seq


@dataclass
class NetworkWeights:
    """Per-layer, per-direction weight sets for a whole network."""

    layers: list[list[WeightSet]]

    @classmethod
    def for_network(cls, net: NetworkDescriptor,
                    make: "callable") -> "NetworkWeights":
        """Build weights by calling make(layer_index, direction_index, layer)."""
        out = []
        for i, layer in enumerate(net.layers):
            out.append([make(i, d, layer) for d in range(layer.num_directions)])
        return cls(out)


# ---------------------------------------------------------------------------
# weight footprint helpers (shared by the schedule and traffic models)

def gate_matrix_bytes(layer: LayerDescriptor, elem_bytes: int) -> tuple[int, int]:
    """(forward matrix bytes, recurrent matrix bytes) for one gate."""
    return (layer.hidden_size * layer.input_size * elem_bytes,
            layer.hidden_size * layer.hidden_size * elem_bytes)


def gate_weight_bytes(layer: LayerDescriptor, gate: str, elem_bytes: int) -> int:
    """All weight bytes one CU holds for this gate: matrices, bias, peephole."""
    wx, wh = gate_matrix_bytes(layer, elem_bytes)
    total = wx + wh + layer.hidden_size * elem_bytes
    if layer.peephole and gate in PEEPHOLE_GATES:
        total += layer.hidden_size * elem_bytes
    return total


def cell_weight_bytes(layer: LayerDescriptor, elem_bytes: int) -> int:
    """Weight bytes of one cell (one direction of one layer)."""
    return sum(gate_weight_bytes(layer, g, elem_bytes) for g in GATES)


def network_weight_bytes(net: NetworkDescriptor) -> int:
    eb = net.numeric_precision.elem_bytes
    return sum(cell_weight_bytes(l, eb) * l.num_directions for l in net.layers)
