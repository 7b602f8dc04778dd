"""Scikit-learn style facade over the auto-decoder pipeline.

``SdfAutoDecoder`` is a standard estimator: constructor stores
hyperparameters verbatim (so ``get_params``/``set_params``/``clone`` work),
``fit`` trains the network and latent table on a list of sample sets,
``transform`` MAP-infers codes for new sample sets, and ``predict``
evaluates the signed distance at query points for a chosen shape.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .autodecoder import infer_latent, train
from .config import RunSettings, build_model_parts, build_train_config
from .errors import InputError
from .model import SdfModel
from .validation import as_float_array, as_points, require


class SdfAutoDecoder(BaseEstimator):
    """Auto-decoder of signed distance fields over a shape collection.

    Fitting learns one network shared by all shapes plus a latent code per
    shape; unseen shapes get codes by optimizing the same objective with
    the network frozen.
    """

    def __init__(self, latent_dim=16, hidden_width=64, hidden_layers=3,
                 activation="siren", omega0_first=30.0, omega0_hidden=30.0,
                 beta_init=1.0, encoding="none", fourier_frequencies=6,
                 fourier_base=2.0, hash_levels=8, hash_features=2,
                 hash_table_log2=15, hash_base_resolution=8,
                 hash_max_resolution=128, epochs=200, lr_params=1e-4,
                 lr_codes=1e-3, lambda_code=1e-4, delta_clamp=0.1,
                 tau_normal=0, shapes_per_batch=8, samples_per_step=512,
                 init_sigma=0.01, infer_steps=0, seed=0, threads=1):
        self.latent_dim = latent_dim
        self.hidden_width = hidden_width
        self.hidden_layers = hidden_layers
        self.activation = activation
        self.omega0_first = omega0_first
        self.omega0_hidden = omega0_hidden
        self.beta_init = beta_init
        self.encoding = encoding
        self.fourier_frequencies = fourier_frequencies
        self.fourier_base = fourier_base
        self.hash_levels = hash_levels
        self.hash_features = hash_features
        self.hash_table_log2 = hash_table_log2
        self.hash_base_resolution = hash_base_resolution
        self.hash_max_resolution = hash_max_resolution
        self.epochs = epochs
        self.lr_params = lr_params
        self.lr_codes = lr_codes
        self.lambda_code = lambda_code
        self.delta_clamp = delta_clamp
        self.tau_normal = tau_normal
        self.shapes_per_batch = shapes_per_batch
        self.samples_per_step = samples_per_step
        self.init_sigma = init_sigma
        self.infer_steps = infer_steps
        self.seed = seed
        self.threads = threads

    # ------------------------------------------------------------ plumbing

    def _settings(self) -> RunSettings:
        shared = {f: getattr(self, f) for f in (
            "latent_dim", "hidden_width", "hidden_layers", "activation",
            "omega0_first", "omega0_hidden", "beta_init", "encoding",
            "fourier_frequencies", "fourier_base", "hash_levels",
            "hash_features", "hash_table_log2", "hash_base_resolution",
            "hash_max_resolution", "epochs", "lr_params", "lr_codes",
            "lambda_code", "delta_clamp", "tau_normal", "shapes_per_batch",
            "samples_per_step", "init_sigma", "infer_steps", "seed",
        )}
        return RunSettings(**shared)

    def _check_fitted(self):
        if not hasattr(self, "store_"):
            raise NotFittedError(
                "this SdfAutoDecoder is not fitted yet; call fit first")

    @staticmethod
    def _check_dataset(X):
        require(len(X) > 0, "fit needs at least one sample set")
        for s in X:
            for attr in ("points", "distances", "near_surface_mask",
                         "shape_id"):
                if not hasattr(s, attr):
                    raise InputError(
                        "fit expects a list of SdfSampleSet-like objects "
                        f"(missing {attr!r})")
        return list(X)

    # ------------------------------------------------------------ sklearn

    def fit(self, X, y=None):
        """Train on a list of SdfSampleSet; returns self."""
        dataset = self._check_dataset(X)
        settings = self._settings()
        spec, encoder = build_model_parts(settings)
        config = build_train_config(settings)
        store, table, history = train(dataset, spec, encoder, config,
                                      init_sigma=self.init_sigma,
                                      threads=self.threads)
        self.spec_ = spec
        self.encoder_ = encoder
        self.store_ = store
        self.table_ = table
        self.history_ = history
        self.shape_ids_ = [s.shape_id for s in dataset]
        self.model_ = SdfModel(spec, encoder)
        return self

    def transform(self, X):
        """MAP-infer one latent code per sample set; returns (n, latent_dim)."""
        self._check_fitted()
        sets = self._check_dataset(X)
        config = build_train_config(self._settings())
        steps = self.infer_steps or None
        codes = [infer_latent(self.store_, self.model_, s, config,
                              steps=steps)[0] for s in sets]
        return np.stack(codes)

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)

    def predict(self, X, index=None, code=None):
        """Signed distances at query points X (n, 3).

        Select the shape by training ``index`` or supply an explicit
        ``code``; with neither, a single-shape model uses its only code.
        """
        self._check_fitted()
        points = as_points(X, "query points")
        require(not (index is not None and code is not None),
                "pass either index or code, not both")
        if code is None:
            if index is None:
                require(len(self.table_) == 1,
                        "model has several shapes; pass index or code")
                index = 0
            require(0 <= index < len(self.table_),
                    f"shape index {index} out of range "
                    f"[0, {len(self.table_)})")
            code = self.table_.codes[index]
        code = as_float_array(code, "latent code",
                              shape=(self.model_.latent_dim,))
        return self.model_.evaluate(self.store_, points, code).values[:, 0]
