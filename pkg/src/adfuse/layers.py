"""Trainable layer primitives with hand-derived backward passes.

Each layer owns its parameter arrays (float64) and exposes a forward pass
returning ``(output, cache)`` plus a backward pass consuming that cache.
Backward passes are exact analytic gradients; `adfuse.training.gradient_check`
verifies every one of them against central finite differences.

Conventions:
    * inputs/outputs are 1-D vectors (single-sample processing; batches are
      loops over records so variable-length modalities need no padding),
    * a linear layer stores W with shape (out, in) and computes W @ x + b,
    * parameter gradients are returned as dicts keyed by the layer's local
      parameter names; the model prefixes those with a path.

Weight init is uniform Glorot for every linear and LSTM matrix; biases are
zero except the LSTM forget gate bias, which starts at 1.0 so memory is
kept by default early in training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError, UsageError
from .numerics import Array, Rng


def glorot_uniform(rng: Rng, out_dim: int, in_dim: int) -> Array:
    limit = math.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, (out_dim, in_dim))


def dropout(x: Array, rate: float, rng: Rng | None, train_mode: bool) -> tuple[Array, Array | None]:
    """Inverted dropout.

    In train mode each entry is zeroed with probability `rate` and the
    survivors are scaled by 1/(1-rate), so eval mode is the identity and
    needs no rescaling. Returns (output, mask); the mask is None when the
    layer acted as the identity (eval mode or rate 0).
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not train_mode or rate == 0.0:
        return x, None
    if rng is None:
        raise UsageError("dropout in train mode requires an rng")
    mask = (rng.random(x.shape) >= rate).astype(np.float64)
    return x * mask / (1.0 - rate), mask


def dropout_backward(grad_y: Array, mask: Array | None, rate: float) -> Array:
    if mask is None:
        return grad_y
    return grad_y * mask / (1.0 - rate)


class Linear:
    """y = W @ x + b with W: (out, in), b: (out,)."""

    def __init__(self, out_dim: int, in_dim: int, rng: Rng):
        self.W = glorot_uniform(rng, out_dim, in_dim)
        self.b = np.zeros(out_dim)

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def forward(self, x: Array) -> Array:
        if x.shape != (self.in_dim,):
            raise ShapeError(f"linear layer expects input shape ({self.in_dim},), got {x.shape}")
        return self.W @ x + self.b

    def backward(self, x: Array, grad_y: Array) -> tuple[Array, dict[str, Array]]:
        grads = {"W": np.outer(grad_y, x), "b": grad_y.copy()}
        return self.W.T @ grad_y, grads

    def params(self) -> dict[str, Array]:
        return {"W": self.W, "b": self.b}


@dataclass
class MlpConfig:
    """Shape/regularization of an MLP: at least two dims, ReLU hidden layers."""

    layer_dims: Sequence[int]
    dropout_rate: float = 0.0
    final_relu: bool = False  # used by the autoencoder's encoder output

    def validate(self) -> None:
        if len(self.layer_dims) < 2:
            raise ConfigError(f"MLP needs >= 2 layer dims, got {list(self.layer_dims)}")
        if any(d < 1 for d in self.layer_dims):
            raise ConfigError(f"MLP dims must be >= 1, got {list(self.layer_dims)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")


@dataclass
class MlpCache:
    x: Array
    pre: list[Array]          # pre-activation of every layer
    hidden_in: list[Array]    # input seen by every layer
    masks: list[Array | None]  # dropout mask per hidden layer (None if identity)


class Mlp:
    """Stack of linear layers, ReLU + inverted dropout after each hidden layer.

    No activation after the final layer unless `final_relu` is set (the
    object autoencoder activates its latent code; plain feature MLPs and
    decoders do not).
    """

    def __init__(self, config: MlpConfig, rng: Rng):
        config.validate()
        self.config = config
        dims = list(config.layer_dims)
        self.layers = [Linear(dims[i + 1], dims[i], rng) for i in range(len(dims) - 1)]

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x: Array, train_mode: bool = False, rng: Rng | None = None) -> tuple[Array, MlpCache]:
        cache = MlpCache(x=x, pre=[], hidden_in=[], masks=[])
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            cache.hidden_in.append(h)
            s = layer.forward(h)
            cache.pre.append(s)
            if i < last:
                h = np.maximum(s, 0.0)
                h, mask = dropout(h, self.config.dropout_rate, rng, train_mode)
                cache.masks.append(mask)
            elif self.config.final_relu:
                h = np.maximum(s, 0.0)
            else:
                h = s
        return h, cache

    def backward(self, cache: MlpCache, grad_y: Array) -> tuple[Array, dict[str, Array]]:
        """Gradients of the forward output w.r.t. input and all parameters."""
        if len(cache.pre) != len(self.layers):
            raise UsageError("MLP backward called with a cache from a different network")
        grads: dict[str, Array] = {}
        g = grad_y
        last = len(self.layers) - 1
        if self.config.final_relu:
            g = g * (cache.pre[last] > 0)
        for i in range(last, -1, -1):
            g_in, layer_grads = self.layers[i].backward(cache.hidden_in[i], g)
            grads[f"{i}.W"] = layer_grads["W"]
            grads[f"{i}.b"] = layer_grads["b"]
            g = g_in
            if i > 0:
                g = dropout_backward(g, cache.masks[i - 1], self.config.dropout_rate)
                g = g * (cache.pre[i - 1] > 0)
        return g, grads

    def params(self) -> dict[str, Array]:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{i}.W"] = layer.W
            out[f"{i}.b"] = layer.b
        return out


class Autoencoder:
    """Encoder/decoder pair used to strip visual rhetoric from object features.

    Defaults to a single linear layer each way with ReLU on the latent code
    (deeper stacks can be configured through the dims arguments). The
    decoder output dimension always equals the encoder input dimension so
    reconstructions compare directly against the inputs.
    """

    def __init__(
        self,
        feature_dim: int,
        latent_dim: int,
        rng: Rng,
        encoder_dims: Sequence[int] | None = None,
        decoder_dims: Sequence[int] | None = None,
    ):
        enc = list(encoder_dims) if encoder_dims is not None else [feature_dim, latent_dim]
        dec = list(decoder_dims) if decoder_dims is not None else [latent_dim, feature_dim]
        if enc[0] != feature_dim or enc[-1] != latent_dim:
            raise ConfigError(f"encoder dims {enc} must map {feature_dim} -> {latent_dim}")
        if dec[0] != latent_dim or dec[-1] != feature_dim:
            raise ConfigError(f"decoder dims {dec} must map {latent_dim} -> {feature_dim}")
        self.encoder = Mlp(MlpConfig(enc, final_relu=True), rng)
        self.decoder = Mlp(MlpConfig(dec), rng)

    def encode(self, x: Array) -> tuple[Array, MlpCache]:
        return self.encoder.forward(x)

    def decode(self, z: Array) -> tuple[Array, MlpCache]:
        return self.decoder.forward(z)

    def params(self) -> dict[str, Array]:
        out = {f"enc.{k}": v for k, v in self.encoder.params().items()}
        out.update({f"dec.{k}": v for k, v in self.decoder.params().items()})
        return out


GATES = ("i", "f", "o", "g")  # input, forget, output, candidate


class LstmParams:
    """One LSTM cell: per-gate input weights W (h, d), hidden weights U (h, h), biases b (h,)."""

    def __init__(self, input_dim: int, hidden_size: int, rng: Rng):
        self.input_dim = input_dim
        self.hidden_size = hidden_size
        for gate in GATES:
            setattr(self, f"W{gate}", glorot_uniform(rng, hidden_size, input_dim))
            setattr(self, f"U{gate}", glorot_uniform(rng, hidden_size, hidden_size))
            bias = np.zeros(hidden_size)
            if gate == "f":
                bias += 1.0  # keep memory by default at init
            setattr(self, f"b{gate}", bias)

    def params(self) -> dict[str, Array]:
        out = {}
        for gate in GATES:
            for kind in ("W", "U", "b"):
                out[f"{kind}{gate}"] = getattr(self, f"{kind}{gate}")
        return out

    def zero_grads(self) -> dict[str, Array]:
        return {name: np.zeros_like(arr) for name, arr in self.params().items()}


@dataclass
class LstmStepCache:
    x: Array
    h_prev: Array
    c_prev: Array
    i: Array
    f: Array
    o: Array
    g: Array
    c: Array
    tanh_c: Array


def lstm_cell_step(params: LstmParams, x_t: Array, h_prev: Array, c_prev: Array) -> tuple[Array, Array, LstmStepCache]:
    """Standard LSTM recurrence:

    i, f, o = sigmoid(Wx + Uh + b) per gate, g = tanh(Wx + Uh + b),
    c = f * c_prev + i * g, h = o * tanh(c).
    """
    if x_t.shape != (params.input_dim,):
        raise ShapeError(f"LSTM step expects input shape ({params.input_dim},), got {x_t.shape}")

    def gate(name: str) -> Array:
        return (
            getattr(params, f"W{name}") @ x_t
            + getattr(params, f"U{name}") @ h_prev
            + getattr(params, f"b{name}")
        )

    i = _sigmoid(gate("i"))
    f = _sigmoid(gate("f"))
    o = _sigmoid(gate("o"))
    g = np.tanh(gate("g"))
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = LstmStepCache(x=x_t, h_prev=h_prev, c_prev=c_prev, i=i, f=f, o=o, g=g, c=c, tanh_c=tanh_c)
    return h, c, cache


def _sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_cell_backward(
    params: LstmParams,
    cache: LstmStepCache,
    grad_h: Array,
    grad_c: Array,
    grads: dict[str, Array],
) -> tuple[Array, Array, Array]:
    """Accumulate one step's parameter gradients into `grads`.

    Returns (grad_x, grad_h_prev, grad_c_prev) so the caller can continue
    BPTT. `grads` must hold per-gate arrays as produced by
    `LstmParams.zero_grads`.
    """
    do = grad_h * cache.tanh_c
    dc = grad_c + grad_h * cache.o * (1.0 - cache.tanh_c**2)
    df = dc * cache.c_prev
    di = dc * cache.g
    dg = dc * cache.i
    grad_c_prev = dc * cache.f

    # gate pre-activation gradients
    pre = {
        "i": di * cache.i * (1.0 - cache.i),
        "f": df * cache.f * (1.0 - cache.f),
        "o": do * cache.o * (1.0 - cache.o),
        "g": dg * (1.0 - cache.g**2),
    }
    grad_x = np.zeros_like(cache.x)
    grad_h_prev = np.zeros_like(cache.h_prev)
    for gate, d in pre.items():
        grads[f"W{gate}"] += np.outer(d, cache.x)
        grads[f"U{gate}"] += np.outer(d, cache.h_prev)
        grads[f"b{gate}"] += d
        grad_x += getattr(params, f"W{gate}").T @ d
        grad_h_prev += getattr(params, f"U{gate}").T @ d
    return grad_x, grad_h_prev, grad_c_prev


@dataclass
class BlstmCache:
    xs: list[Array]
    fwd_steps: list[LstmStepCache]
    bwd_steps: list[LstmStepCache]  # index j caches the step that read xs[j]


class Blstm:
    """Bidirectional LSTM; per-step output concatenates both hidden states.

    Output dim per step is 2 * hidden_size: the forward cell's state after
    reading x[0..j] followed by the backward cell's state after reading
    x[M-1..j].
    """

    def __init__(self, input_dim: int, hidden_size: int, rng: Rng):
        self.hidden_size = hidden_size
        self.forward_cell = LstmParams(input_dim, hidden_size, rng)
        self.backward_cell = LstmParams(input_dim, hidden_size, rng)

    @property
    def out_dim(self) -> int:
        return 2 * self.hidden_size

    def forward(self, xs: Sequence[Array]) -> tuple[list[Array], BlstmCache]:
        if len(xs) == 0:
            raise UsageError("BLSTM forward needs at least one step; empty text is handled by the model")
        H = self.hidden_size
        h = np.zeros(H)
        c = np.zeros(H)
        fwd_h: list[Array] = []
        fwd_steps: list[LstmStepCache] = []
        for x in xs:
            h, c, step = lstm_cell_step(self.forward_cell, x, h, c)
            fwd_h.append(h)
            fwd_steps.append(step)
        h = np.zeros(H)
        c = np.zeros(H)
        bwd_h: list[Array | None] = [None] * len(xs)
        bwd_steps: list[LstmStepCache | None] = [None] * len(xs)
        for j in range(len(xs) - 1, -1, -1):
            h, c, step = lstm_cell_step(self.backward_cell, xs[j], h, c)
            bwd_h[j] = h
            bwd_steps[j] = step
        zs = [np.concatenate([fwd_h[j], bwd_h[j]]) for j in range(len(xs))]
        return zs, BlstmCache(xs=list(xs), fwd_steps=fwd_steps, bwd_steps=bwd_steps)

    def backward(self, cache: BlstmCache, grad_zs: Sequence[Array]) -> tuple[list[Array], dict[str, Array]]:
        """Full BPTT through both directions. Returns per-step input grads and parameter grads."""
        M = len(cache.xs)
        if len(grad_zs) != M:
            raise UsageError(f"BLSTM backward got {len(grad_zs)} grads for {M} steps")
        H = self.hidden_size
        grad_xs = [np.zeros_like(x) for x in cache.xs]
        fwd_grads = self.forward_cell.zero_grads()
        bwd_grads = self.backward_cell.zero_grads()

        gh = np.zeros(H)
        gc = np.zeros(H)
        for j in range(M - 1, -1, -1):
            gh = gh + grad_zs[j][:H]
            gx, gh, gc = lstm_cell_backward(self.forward_cell, cache.fwd_steps[j], gh, gc, fwd_grads)
            grad_xs[j] += gx

        gh = np.zeros(H)
        gc = np.zeros(H)
        for j in range(M):  # reverse of the backward cell's processing order
            gh = gh + grad_zs[j][H:]
            gx, gh, gc = lstm_cell_backward(self.backward_cell, cache.bwd_steps[j], gh, gc, bwd_grads)
            grad_xs[j] += gx

        grads = {f"fwd.{k}": v for k, v in fwd_grads.items()}
        grads.update({f"bwd.{k}": v for k, v in bwd_grads.items()})
        return grad_xs, grads

    def params(self) -> dict[str, Array]:
        out = {f"fwd.{k}": v for k, v in self.forward_cell.params().items()}
        out.update({f"bwd.{k}": v for k, v in self.backward_cell.params().items()})
        return out
