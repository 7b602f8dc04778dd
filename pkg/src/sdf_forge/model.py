"""Encoder + MLP composition behind one flat parameter store.

The network input row is ``[latent code | encoded coordinates]``. This
module routes values, spatial Jacobians and adjoints across that seam:
latent gradients come off the first ``latent_dim`` input slots, encoder
table gradients off the feature slots (including the second-order path
through the feature Jacobian).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoding import IdentityEncoding
from .errors import InputError
from .network import (
    EvalBatch,
    NetworkSpec,
    ParamStore,
    _forward_pass,
    backward_from_caches,
    init_network,
)
from .validation import check_finite


@dataclass
class EvalContext:
    """Intermediates from one evaluate(); feed back into backward()."""

    batch: EvalBatch
    net_caches: list
    enc_cache: object
    used_jacobian: bool


class SdfModel:
    """A latent-conditioned SDF: f(x, z) = MLP([z | encode(x)])."""

    def __init__(self, spec: NetworkSpec, encoder=None):
        self.spec = spec
        self.encoder = encoder if encoder is not None else IdentityEncoding()
        self.latent_dim = spec.input_dim - self.encoder.out_dim
        if self.latent_dim < 0:
            raise InputError(
                f"encoding dim {self.encoder.out_dim} exceeds network "
                f"input_dim {spec.input_dim}"
            )

    def init_params(self, seed: int) -> ParamStore:
        return init_network(self.spec, seed, self.encoder)

    def _tables(self, store):
        return store.view("encoder.tables") if self.encoder.param_count else None

    def evaluate(
        self, store, coords, codes, need_jacobian=False, keep_ctx=False
    ):
        """Evaluate f at coords with per-point codes (B, latent_dim).

        Returns an EvalBatch, or (EvalBatch, EvalContext) with keep_ctx.
        """
        coords = np.asarray(coords, dtype=np.float64)
        codes = np.asarray(codes, dtype=np.float64)
        if codes.ndim == 1:
            codes = np.broadcast_to(codes, (coords.shape[0], codes.size))
        check_finite(coords, "coords")
        check_finite(codes, "codes")
        if codes.shape != (coords.shape[0], self.latent_dim):
            raise InputError(
                f"codes shape {codes.shape} does not match "
                f"({coords.shape[0]}, {self.latent_dim})"
            )
        feats, fjac, enc_cache = self.encoder.encode(
            coords, params=self._tables(store), need_jacobian=need_jacobian
        )
        inputs = np.hstack([codes, feats])
        tangents = None
        if need_jacobian:
            tangents = np.zeros((coords.shape[0], 3, self.spec.input_dim))
            tangents[:, :, self.latent_dim :] = fjac
        values, t_out, caches = _forward_pass(
            store, self.spec, inputs, tangents, keep_cache=keep_ctx
        )
        batch = EvalBatch(
            inputs=inputs,
            values=values,
            spatial_jacobian=t_out[:, :, 0] if t_out is not None else None,
        )
        if not keep_ctx:
            return batch
        return batch, EvalContext(batch, caches, enc_cache, need_jacobian)

    def backward(self, store, ctx: EvalContext, value_adjoints, jac_adjoints=None):
        """Propagate loss adjoints; returns (flat param grads, code grads).

        ``jac_adjoints`` has shape (B, 3) — dL/d(spatial jacobian) — and
        requires the context to come from a jacobian-mode evaluate.
        """
        if jac_adjoints is not None and not ctx.used_jacobian:
            raise InputError("jacobian adjoints need a gradient-mode evaluate")
        t_bar = jac_adjoints[:, :, None] if jac_adjoints is not None else None
        res = backward_from_caches(
            store, self.spec, ctx.net_caches, value_adjoints, t_bar
        )
        code_grads = res.input_grads[:, : self.latent_dim]
        if self.encoder.param_count:
            feat_adj = res.input_grads[:, self.latent_dim :]
            jac_feat_adj = None
            if res.tangent_grads is not None:
                jac_feat_adj = res.tangent_grads[:, :, self.latent_dim :]
            table_grads = self.encoder.backward_tables(
                ctx.enc_cache, feat_adj, jac_feat_adj
            )
            res.param_grads[store.segment_slice("encoder.tables")] += table_grads
        return res.param_grads, code_grads
