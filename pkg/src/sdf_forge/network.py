"""Dense MLP engine with hand-rolled differentiation.

Three derivative flavours are wired through one code path:

* reverse mode over the parameters (weights, biases, per-layer sharpness
  scalars, encoder tables) for training;
* forward mode over the three raw spatial coordinates, carried as tangent
  channels alongside the activations, which yields the exact spatial
  Jacobian of the output;
* reverse mode *through* the tangent computation, so losses that penalise
  the spatial gradient (the surface-normal term) still produce exact
  parameter gradients.

Tangent arrays use the layout ``(batch, 3, width)``: channel c holds
``d activation / d x_c``. All math is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activations import (
    Hosc,
    Identity,
    Relu,
    Sine,
    activation_from_dict,
    activation_to_dict,
)
from .encoding import IdentityEncoding
from .errors import InputError
from .validation import check_finite


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: object

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise InputError(
                f"layer dims must be >= 1, got {self.in_dim}x{self.out_dim}"
            )


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple

    def __post_init__(self):
        if not self.layers:
            raise InputError("network needs at least one layer")
        object.__setattr__(self, "layers", tuple(self.layers))
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise InputError(
                    f"layer widths do not chain: {a.out_dim} -> {b.in_dim}"
                )
        if not isinstance(self.layers[-1].activation, Identity):
            raise InputError("last layer must be linear (raw distance output)")

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    def to_dict(self):
        return {
            "layers": [
                {
                    "in_dim": l.in_dim,
                    "out_dim": l.out_dim,
                    "activation": activation_to_dict(l.activation),
                }
                for l in self.layers
            ]
        }

    @staticmethod
    def from_dict(d):
        return NetworkSpec(
            tuple(
                LayerSpec(
                    int(l["in_dim"]),
                    int(l["out_dim"]),
                    activation_from_dict(l["activation"]),
                )
                for l in d["layers"]
            )
        )


def mlp_spec(input_dim, hidden_width, hidden_layers, activation_factory) -> NetworkSpec:
    """Build [input -> W, W -> W (hidden_layers-1 times), W -> 1 linear].

    ``activation_factory(k)`` returns the activation for hidden layer k,
    letting sine networks use a different frequency on the first layer.
    """
    layers = [LayerSpec(input_dim, hidden_width, activation_factory(0))]
    for k in range(1, hidden_layers):
        layers.append(LayerSpec(hidden_width, hidden_width, activation_factory(k)))
    layers.append(LayerSpec(hidden_width, 1, Identity()))
    return NetworkSpec(tuple(layers))


@dataclass
class ParamStore:
    """Flat float64 parameter vector plus named (start, stop, shape) segments."""

    values: np.ndarray
    segments: dict

    def view(self, name) -> np.ndarray:
        start, stop, shape = self.segments[name]
        return self.values[start:stop].reshape(shape)

    def segment_slice(self, name) -> slice:
        start, stop, _ = self.segments[name]
        return slice(start, stop)

    def copy(self) -> "ParamStore":
        return ParamStore(self.values.copy(), dict(self.segments))

    def __len__(self):
        return self.values.size


@dataclass
class EvalBatch:
    """One batched evaluation; spatial_jacobian only in gradient mode."""

    inputs: np.ndarray
    values: np.ndarray
    spatial_jacobian: np.ndarray | None = None


def build_segments(spec: NetworkSpec, encoder=None):
    segments = {}
    offset = 0

    def add(name, shape):
        nonlocal offset
        size = int(np.prod(shape))
        segments[name] = (offset, offset + size, tuple(shape))
        offset += size

    for k, layer in enumerate(spec.layers):
        add(f"layer{k}.weight", (layer.in_dim, layer.out_dim))
        add(f"layer{k}.bias", (layer.out_dim,))
        if layer.activation.has_beta:
            add(f"layer{k}.beta", (1,))
    if encoder is not None and encoder.param_count:
        add("encoder.tables", (encoder.param_count,))
    return segments, offset


def param_count(spec: NetworkSpec, encoder=None) -> int:
    """Closed-form parameter count: sum(in*out + out) + trainable betas."""
    total = sum(
        l.in_dim * l.out_dim + l.out_dim + (1 if l.activation.has_beta else 0)
        for l in spec.layers
    )
    if encoder is not None:
        total += encoder.param_count
    return total


def init_network(spec: NetworkSpec, seed: int, encoder=None) -> ParamStore:
    """Deterministic init: bounded-uniform weights, zero biases.

    First sine layer U[-1/in, 1/in]; later sine layers
    U[-sqrt(6/in)/omega0, sqrt(6/in)/omega0]; everything else
    U[-sqrt(6/in), sqrt(6/in)]. Hosc betas start at beta_init, hash tables
    at U[-1e-4, 1e-4]. Draw order follows the segment layout.
    """
    segments, total = build_segments(spec, encoder)
    values = np.zeros(total)
    store = ParamStore(values, segments)
    rng = np.random.default_rng(seed)
    for k, layer in enumerate(spec.layers):
        act = layer.activation
        if isinstance(act, Sine):
            if k == 0:
                bound = 1.0 / layer.in_dim
            else:
                bound = np.sqrt(6.0 / layer.in_dim) / act.omega0
        else:
            bound = np.sqrt(6.0 / layer.in_dim)
        w = store.view(f"layer{k}.weight")
        w[...] = rng.uniform(-bound, bound, size=w.shape)
        # biases stay zero
        if act.has_beta:
            store.view(f"layer{k}.beta")[0] = act.beta_init
    if encoder is not None and encoder.param_count:
        store.view("encoder.tables")[...] = encoder.init_params(rng)
    return store


def _layer_beta(store: ParamStore, spec: NetworkSpec, k: int):
    act = spec.layers[k].activation
    if isinstance(act, Hosc):
        if act.beta_trainable:
            return float(store.view(f"layer{k}.beta")[0])
        return act.beta_init
    return None


def _forward_pass(store, spec, inputs, tangents=None, keep_cache=False):
    """Run the net, optionally carrying (B, 3, width) tangent channels.

    Returns (values, final_tangents, caches); caches hold the per-layer
    intermediates needed by the reverse pass.
    """
    a = inputs
    t = tangents
    caches = [] if keep_cache else None
    for k, layer in enumerate(spec.layers):
        w = store.view(f"layer{k}.weight")
        b = store.view(f"layer{k}.bias")
        beta = _layer_beta(store, spec, k)
        s = a @ w + b
        u = t @ w if t is not None else None
        act = layer.activation
        if keep_cache:
            caches.append((a, s, t, u, beta))
        a = act.value(s, beta)
        t = act.d1(s, beta)[:, None, :] * u if u is not None else None
    return a, t, caches


def forward(store: ParamStore, spec: NetworkSpec, batch) -> np.ndarray:
    """Pure batched evaluation; rejects non-finite or mis-shaped input."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != spec.input_dim:
        raise InputError(
            f"batch width {batch.shape} does not match input_dim {spec.input_dim}"
        )
    check_finite(batch, "batch")
    values, _, _ = _forward_pass(store, spec, batch)
    return values


def forward_with_spatial_grad(
    store: ParamStore,
    spec: NetworkSpec,
    coords,
    latent,
    encoder=None,
) -> EvalBatch:
    """Evaluate with the exact derivative in the three raw coordinates.

    The Jacobian is chained through the encoder; latent inputs carry zero
    tangents and therefore receive no spatial derivative.
    """
    encoder = encoder if encoder is not None else IdentityEncoding()
    coords = np.asarray(coords, dtype=np.float64)
    latent = np.asarray(latent, dtype=np.float64)
    check_finite(coords, "coords")
    check_finite(latent, "latent")
    tables = store.view("encoder.tables") if encoder.param_count else None
    feats, fjac, _ = encoder.encode(coords, params=tables, need_jacobian=True)
    inputs = np.hstack([latent, feats])
    if inputs.shape[1] != spec.input_dim:
        raise InputError(
            f"latent dim {latent.shape[1]} + encoding dim {feats.shape[1]} "
            f"does not match input_dim {spec.input_dim}"
        )
    n, latent_dim = latent.shape
    tangents = np.zeros((n, 3, spec.input_dim))
    tangents[:, :, latent_dim:] = fjac
    values, t_out, _ = _forward_pass(store, spec, inputs, tangents)
    return EvalBatch(inputs=inputs, values=values, spatial_jacobian=t_out[:, :, 0])


@dataclass
class BackwardResult:
    param_grads: np.ndarray  # flat, aligned with the ParamStore segments
    input_grads: np.ndarray  # (B, input_dim)
    tangent_grads: np.ndarray | None  # (B, 3, input_dim) in second-order mode


def backward(
    store: ParamStore,
    spec: NetworkSpec,
    batch,
    value_adjoints,
    jac_adjoints=None,
    input_tangents=None,
) -> BackwardResult:
    """Reverse-propagate loss adjoints to parameters and inputs.

    ``value_adjoints`` is dL/d(output), shape (B, out). When
    ``jac_adjoints`` (dL/d(spatial jacobian), shape (B, 3, out)) is given
    the pass is second order: the tangent-augmented forward computation is
    rebuilt with ``input_tangents`` (B, 3, input_dim) and differentiated
    through, so the normal-term contribution lands in the parameter
    gradients as well.
    """
    batch = np.asarray(batch, dtype=np.float64)
    value_adjoints = np.asarray(value_adjoints, dtype=np.float64)
    if value_adjoints.shape != (batch.shape[0], spec.output_dim):
        raise InputError(
            f"adjoint shape {value_adjoints.shape} does not match batch "
            f"({batch.shape[0]}, {spec.output_dim})"
        )
    if jac_adjoints is not None:
        jac_adjoints = np.asarray(jac_adjoints, dtype=np.float64)
        if input_tangents is None:
            raise InputError("second-order backward needs input_tangents")
        if jac_adjoints.shape != (batch.shape[0], 3, spec.output_dim):
            raise InputError(
                f"jacobian adjoint shape {jac_adjoints.shape} does not match "
                f"batch ({batch.shape[0]}, 3, {spec.output_dim})"
            )
    _, _, caches = _forward_pass(
        store, spec, batch, input_tangents if jac_adjoints is not None else None,
        keep_cache=True,
    )
    return backward_from_caches(store, spec, caches, value_adjoints, jac_adjoints)


def backward_from_caches(
    store, spec, caches, value_adjoints, jac_adjoints=None
) -> BackwardResult:
    """Reverse pass over intermediates from a cached forward pass."""
    grads = np.zeros_like(store.values)
    a_bar = value_adjoints
    t_bar = jac_adjoints
    for k in range(len(spec.layers) - 1, -1, -1):
        a_in, s, t_in, u, beta = caches[k]
        act = spec.layers[k].activation
        d1 = act.d1(s, beta)
        s_bar = a_bar * d1
        u_bar = None
        if t_bar is not None:
            u_bar = d1[:, None, :] * t_bar
            s_bar = s_bar + act.d2(s, beta) * np.sum(u * t_bar, axis=1)
        if act.has_beta:
            g = float(np.sum(act.d_beta(s, beta) * a_bar))
            if t_bar is not None:
                g += float(np.sum(act.d1_d_beta(s, beta)[:, None, :] * u * t_bar))
            grads[store.segment_slice(f"layer{k}.beta")] += g
        gw = a_in.T @ s_bar
        if u_bar is not None:
            gw = gw + np.tensordot(t_in, u_bar, axes=([0, 1], [0, 1]))
        grads[store.segment_slice(f"layer{k}.weight")] += gw.ravel()
        grads[store.segment_slice(f"layer{k}.bias")] += s_bar.sum(axis=0)
        w = store.view(f"layer{k}.weight")
        a_bar = s_bar @ w.T
        if t_bar is not None:
            t_bar = u_bar @ w.T
    return BackwardResult(param_grads=grads, input_grads=a_bar, tangent_grads=t_bar)
