"""Positional encodings with analytic spatial derivatives.

Encoders lift raw 3D coordinates to the feature vector fed to the MLP
(together with the latent code) and report the Jacobian of those features
with respect to the raw coordinates, so the chain rule through the whole
model stays exact. The multiresolution hash encoder carries trainable
per-level feature tables; those live in the flat parameter store and their
gradients flow through ``backward_tables``.

Jacobians use the layout ``jac[b, c, e] = d feature_e / d x_c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

HASH_PRIMES = np.array([1, 2654435761, 805459861], dtype=np.uint64)


@dataclass(frozen=True)
class IdentityEncoding:
    """Pass-through: features are the raw coordinates."""

    out_dim = 3
    param_count = 0
    name = "none"

    def encode(self, x, params=None, need_jacobian=False):
        x = np.asarray(x, dtype=np.float64)
        jac = None
        if need_jacobian:
            jac = np.broadcast_to(np.eye(3), (x.shape[0], 3, 3)).copy()
        return x, jac, None

    def backward_tables(self, cache, feat_adjoint, jac_adjoint=None):
        return None

    def to_dict(self):
        return {"kind": "none"}


@dataclass(frozen=True)
class FourierEncoding:
    """Deterministic sin/cos frequency bands applied per coordinate.

    Feature layout: optional raw ``x`` block, then per band l the blocks
    ``sin(base^l * pi * x)`` and ``cos(base^l * pi * x)``, three entries each.
    """

    num_frequencies: int = 6
    base: float = 2.0
    include_input: bool = True
    name = "fourier"
    param_count = 0

    def __post_init__(self):
        if self.num_frequencies < 0:
            raise InputError("num_frequencies must be >= 0")
        if not self.base > 0:
            raise InputError("fourier base must be positive")

    @property
    def out_dim(self):
        return (3 if self.include_input else 0) + 6 * self.num_frequencies

    def _omegas(self):
        return np.pi * self.base ** np.arange(self.num_frequencies)

    def encode(self, x, params=None, need_jacobian=False):
        x = np.asarray(x, dtype=np.float64)
        n = x.shape[0]
        feats = np.empty((n, self.out_dim))
        jac = np.zeros((n, 3, self.out_dim)) if need_jacobian else None
        col = 0
        if self.include_input:
            feats[:, :3] = x
            if need_jacobian:
                for c in range(3):
                    jac[:, c, c] = 1.0
            col = 3
        for omega in self._omegas():
            wx = omega * x
            feats[:, col : col + 3] = np.sin(wx)
            feats[:, col + 3 : col + 6] = np.cos(wx)
            if need_jacobian:
                for c in range(3):
                    jac[:, c, col + c] = omega * np.cos(wx[:, c])
                    jac[:, c, col + 3 + c] = -omega * np.sin(wx[:, c])
            col += 6
        return feats, jac, None

    def backward_tables(self, cache, feat_adjoint, jac_adjoint=None):
        return None

    def to_dict(self):
        return {
            "kind": "fourier",
            "num_frequencies": self.num_frequencies,
            "base": self.base,
            "include_input": self.include_input,
        }


@dataclass(frozen=True)
class HashEncoding:
    """Multiresolution hash grids with trilinear interpolation.

    Level l has grid resolution ``N_l = floor(base_resolution * growth**l)``
    (cells per axis; corners at N_l + 1 lattice points). Levels whose full
    corner lattice fits inside the table are indexed densely; finer levels
    use the three-prime spatial hash modulo 2**table_size_log2. Coordinates
    are mapped affinely from ``bounds`` onto the unit cube; points outside
    are rejected.
    """

    num_levels: int = 8
    features_per_level: int = 2
    table_size_log2: int = 15
    base_resolution: int = 8
    max_resolution: int = 128
    bounds: tuple = (0.0, 1.0)
    name = "hash"

    def __post_init__(self):
        if self.num_levels < 1:
            raise InputError("num_levels must be >= 1")
        if self.base_resolution < 1 or self.max_resolution < self.base_resolution:
            raise InputError("need 1 <= base_resolution <= max_resolution")
        if not self.bounds[1] > self.bounds[0]:
            raise InputError("hash bounds must have hi > lo")

    @property
    def out_dim(self):
        return self.num_levels * self.features_per_level

    @property
    def level_resolutions(self):
        if self.num_levels == 1:
            return [self.base_resolution]
        growth = np.exp(
            (np.log(self.max_resolution) - np.log(self.base_resolution))
            / (self.num_levels - 1)
        )
        return [
            int(np.floor(self.base_resolution * growth**level))
            for level in range(self.num_levels)
        ]

    def _level_sizes(self):
        hashed = 1 << self.table_size_log2
        sizes = []
        for n in self.level_resolutions:
            corners = (n + 1) ** 3
            sizes.append(corners if corners <= hashed else hashed)
        return sizes

    @property
    def level_offsets(self):
        offs = [0]
        for size in self._level_sizes():
            offs.append(offs[-1] + size * self.features_per_level)
        return offs

    @property
    def param_count(self):
        return self.level_offsets[-1]

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        # small symmetric init keeps early training dominated by the MLP
        return rng.uniform(-1e-4, 1e-4, size=self.param_count)

    def _to_unit(self, x):
        lo, hi = self.bounds
        u = (np.asarray(x, dtype=np.float64) - lo) / (hi - lo)
        bad = (u < -1e-12) | (u > 1.0 + 1e-12)
        if bad.any():
            idx = int(np.nonzero(bad.any(axis=1))[0][0])
            raise InputError(
                f"point {idx} lies outside the hash-encoding domain "
                f"[{lo}, {hi}]^3: {np.asarray(x)[idx]}"
            )
        return np.clip(u, 0.0, 1.0), 1.0 / (hi - lo)

    def _corner_indices(self, i0, res, size):
        # i0: (n, 8, 3) integer corner coordinates in [0, res]
        if (res + 1) ** 3 <= size:
            side = np.uint64(res + 1)
            flat = (
                i0[..., 0].astype(np.uint64) * side + i0[..., 1].astype(np.uint64)
            ) * side + i0[..., 2].astype(np.uint64)
        else:
            h = i0.astype(np.uint64) * HASH_PRIMES
            flat = (h[..., 0] ^ h[..., 1] ^ h[..., 2]) & np.uint64(size - 1)
        return flat.astype(np.int64)

    def encode(self, x, params=None, need_jacobian=False):
        if params is None:
            raise InputError("hash encoding requires its feature tables")
        u, dudx = self._to_unit(x)
        n = u.shape[0]
        nf = self.features_per_level
        feats = np.empty((n, self.out_dim))
        jac = np.zeros((n, 3, self.out_dim)) if need_jacobian else None
        sizes = self._level_sizes()
        offsets = self.level_offsets
        corner_offsets = np.array(
            [[dx, dy, dz] for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)]
        )
        cache = []
        for level, res in enumerate(self.level_resolutions):
            scaled = u * res
            base = np.minimum(np.floor(scaled), res - 1).astype(np.int64)
            frac = scaled - base  # in [0, 1]
            corners = base[:, None, :] + corner_offsets[None, :, :]  # (n, 8, 3)
            flat = self._corner_indices(corners, res, sizes[level])
            table = params[offsets[level] : offsets[level + 1]].reshape(
                sizes[level], nf
            )
            # trilinear weights and their derivatives in the unit cell
            w_axis = np.where(corner_offsets[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :])
            weights = w_axis[..., 0] * w_axis[..., 1] * w_axis[..., 2]  # (n, 8)
            gathered = table[flat]  # (n, 8, nf)
            feats[:, level * nf : (level + 1) * nf] = np.einsum(
                "nc,ncf->nf", weights, gathered
            )
            dweights = None
            if need_jacobian:
                sign = np.where(corner_offsets[None, :, :] == 1, 1.0, -1.0)
                dweights = np.empty((n, 8, 3))
                dweights[..., 0] = sign[..., 0] * w_axis[..., 1] * w_axis[..., 2]
                dweights[..., 1] = sign[..., 1] * w_axis[..., 0] * w_axis[..., 2]
                dweights[..., 2] = sign[..., 2] * w_axis[..., 0] * w_axis[..., 1]
                dweights *= res * dudx  # chain through unit mapping
                jac[:, :, level * nf : (level + 1) * nf] = np.einsum(
                    "nca,ncf->naf", dweights, gathered
                )
            cache.append((flat, weights, dweights))
        return feats, jac, cache

    def backward_tables(self, cache, feat_adjoint, jac_adjoint=None):
        """Scatter feature/jacobian adjoints back onto the level tables."""
        grads = np.zeros(self.param_count)
        nf = self.features_per_level
        sizes = self._level_sizes()
        offsets = self.level_offsets
        for level, (flat, weights, dweights) in enumerate(cache):
            fadj = feat_adjoint[:, level * nf : (level + 1) * nf]  # (n, nf)
            contrib = weights[:, :, None] * fadj[:, None, :]  # (n, 8, nf)
            if jac_adjoint is not None:
                if dweights is None:
                    raise InputError(
                        "jacobian adjoint supplied but encode ran without "
                        "need_jacobian"
                    )
                jadj = jac_adjoint[:, :, level * nf : (level + 1) * nf]  # (n, 3, nf)
                contrib = contrib + np.einsum("nca,naf->ncf", dweights, jadj)
            level_grad = grads[offsets[level] : offsets[level + 1]].reshape(
                sizes[level], nf
            )
            np.add.at(level_grad, flat.ravel(), contrib.reshape(-1, nf))
        return grads

    def to_dict(self):
        return {
            "kind": "hash",
            "num_levels": self.num_levels,
            "features_per_level": self.features_per_level,
            "table_size_log2": self.table_size_log2,
            "base_resolution": self.base_resolution,
            "max_resolution": self.max_resolution,
            "bounds": [self.bounds[0], self.bounds[1]],
        }


def encoding_from_dict(d: dict):
    kind = d.get("kind", "none")
    if kind == "none":
        return IdentityEncoding()
    if kind == "fourier":
        return FourierEncoding(
            num_frequencies=int(d["num_frequencies"]),
            base=float(d["base"]),
            include_input=bool(d["include_input"]),
        )
    if kind == "hash":
        return HashEncoding(
            num_levels=int(d["num_levels"]),
            features_per_level=int(d["features_per_level"]),
            table_size_log2=int(d["table_size_log2"]),
            base_resolution=int(d["base_resolution"]),
            max_resolution=int(d["max_resolution"]),
            bounds=(float(d["bounds"][0]), float(d["bounds"][1])),
        )
    raise InputError(f"unknown encoding kind {kind!r}")


def encoding_output_dim(spec) -> int:
    return spec.out_dim


def fourier_encode(x, spec: FourierEncoding):
    """Feature vector for a batch of points (no derivative)."""
    feats, _, _ = spec.encode(np.atleast_2d(x), need_jacobian=False)
    return feats


def hash_encode(x, spec: HashEncoding, tables):
    """Feature vector for a batch of points in the encoder's domain."""
    feats, _, _ = spec.encode(np.atleast_2d(x), params=tables, need_jacobian=False)
    return feats
