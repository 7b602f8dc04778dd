"""Auto-decoder training: latent table, clamped-L1 SDF loss, MAP inference.

One latent code per training shape is optimized jointly with the network
parameters. The per-shape loss is

    mean_i |clamp(f(x_i, z), delta) - clamp(d_i, delta)|
      + lambda_code * ||z||^2
      + tau_normal * mean_{near surface} ||grad_x f(x_i, z) - n_i||^2,

a mean over sampled points rather than the raw sum so that lambda_code
keeps a scale-free meaning across sample counts. The normal penalty is
restricted to samples flagged near-surface, where mesh-derived normals are
well defined. Unseen shapes get a code by maximum-a-posteriori inference:
the same loss minimized over z alone with the network frozen, starting
from the zero vector.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, TrainingDiverged
from .model import SdfModel
from .network import param_count
from .seeding import stage_rng
from .validation import check_positive, require

log = logging.getLogger("sdf_forge.train")


def clamp(x, delta):
    """Limit x to [-delta, delta]."""
    check_positive(delta, "delta")
    return np.minimum(np.maximum(x, -delta), delta)


def sdf_point_loss(pred, target, delta):
    """|clamp(pred, delta) - clamp(target, delta)|, elementwise."""
    return np.abs(clamp(pred, delta) - clamp(target, delta))


def interpolate_latents(z_a, z_b, t):
    """Linear blend (1-t)*z_a + t*z_b."""
    z_a = np.asarray(z_a, dtype=np.float64)
    z_b = np.asarray(z_b, dtype=np.float64)
    require(z_a.shape == z_b.shape, "latent codes must have equal dims")
    require(0.0 <= t <= 1.0, f"interpolation t must lie in [0,1], got {t}")
    return (1.0 - t) * z_a + t * z_b


@dataclass
class TrainConfig:
    epochs: int
    lambda_code: float = 1e-4
    delta_clamp: float = 0.1
    tau_normal: int = 0
    lr_params: float = 1e-4
    lr_codes: float = 1e-3
    shapes_per_batch: int = 8
    samples_per_shape_per_step: int = 512
    seed: int = 0

    def __post_init__(self):
        require(self.epochs >= 0, "epochs must be >= 0")
        check_positive(self.delta_clamp, "delta_clamp")
        require(self.tau_normal in (0, 1), "tau_normal must be 0 or 1")
        check_positive(self.lr_params, "lr_params")
        check_positive(self.lr_codes, "lr_codes")
        require(self.shapes_per_batch >= 1, "shapes_per_batch must be >= 1")
        require(
            self.samples_per_shape_per_step >= 1,
            "samples_per_shape_per_step must be >= 1",
        )


@dataclass
class LatentTable:
    """One row of codes per training shape."""

    codes: np.ndarray  # (N, latent_dim)
    init_sigma: float

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.float64)
        check_positive(self.init_sigma, "init_sigma")

    @property
    def latent_dim(self):
        return self.codes.shape[1]

    def __len__(self):
        return self.codes.shape[0]


def init_latent_table(num_shapes, latent_dim, init_sigma, seed) -> LatentTable:
    """i.i.d. zero-mean Gaussian codes with std init_sigma."""
    rng = stage_rng(seed, "latent-init")
    return LatentTable(
        rng.normal(0.0, init_sigma, size=(num_shapes, latent_dim)), init_sigma
    )


@dataclass
class LossParts:
    data: float
    code: float
    normal: float

    @property
    def total(self):
        return self.data + self.code + self.normal


@dataclass
class HistoryRecord:
    epoch: int
    data_loss: float
    code_loss: float
    normal_loss: float
    seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)


def _check_samples(samples, config):
    require(len(samples) > 0, f"sample set {samples.shape_id!r} is empty")
    if config.tau_normal and not samples.has_normals:
        raise InputError(
            f"tau_normal=1 but sample set {samples.shape_id!r} has no normals"
        )


def _loss_pieces(model, store, code, points, distances, normals, near, config):
    """Loss, decomposition, and adjoints at one batch of points."""
    need_jac = bool(config.tau_normal)
    codes = np.broadcast_to(code, (points.shape[0], code.size))
    batch, ctx = model.evaluate(store, points, codes, need_jacobian=need_jac, keep_ctx=True)
    f = batch.values[:, 0]
    m = f.size

    cf = clamp(f, config.delta_clamp)
    cd = clamp(distances, config.delta_clamp)
    resid = cf - cd
    data = float(np.mean(np.abs(resid)))
    value_adj = (np.sign(resid) * (np.abs(f) < config.delta_clamp) / m)[:, None]

    code_pen = config.lambda_code * float(code @ code)

    normal_term = 0.0
    jac_adj = None
    if need_jac:
        if normals is None:
            raise InputError("tau_normal=1 needs normals for the sampled points")
        k = int(np.count_nonzero(near))
        if k:
            err = batch.spatial_jacobian - normals
            err[~near] = 0.0
            normal_term = float(np.sum(err * err) / k)
            jac_adj = (2.0 / k) * err
        else:
            jac_adj = np.zeros_like(batch.spatial_jacobian)
    parts = LossParts(data, code_pen, config.tau_normal * normal_term)
    return parts, batch, ctx, value_adj, jac_adj


def shape_loss(store, model: SdfModel, code, samples, config: TrainConfig):
    """Full per-shape loss and its (data, code, normal) decomposition."""
    _check_samples(samples, config)
    code = np.asarray(code, dtype=np.float64)
    parts, _, _, _, _ = _loss_pieces(
        model, store, code, samples.points, samples.distances,
        samples.normals, samples.near_surface_mask, config,
    )
    return parts.total, parts


def shape_loss_grads(store, model, code, points, distances, normals, near, config):
    """Loss, decomposition, parameter gradient, and code gradient."""
    parts, batch, ctx, value_adj, jac_adj = _loss_pieces(
        model, store, code, points, distances, normals, near, config
    )
    pgrads, cgrads_rows = model.backward(store, ctx, value_adj, jac_adjoints=jac_adj)
    cgrad = cgrads_rows.sum(axis=0) + 2.0 * config.lambda_code * code
    return parts, pgrads, cgrad


class Adam:
    """Adaptive-moment optimizer over a flat array (or rows of a table)."""

    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = np.zeros(shape[:1], dtype=np.int64) if len(shape) == 2 else 0

    def step(self, values, grads, lr_scale=1.0):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1 - self.beta2) * grads * grads
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        values -= self.lr * lr_scale * mhat / (np.sqrt(vhat) + self.eps)

    def step_row(self, values, row, grad, lr_scale=1.0):
        """Update one table row with its own bias-correction clock."""
        self.t[row] += 1
        t = self.t[row]
        self.m[row] = self.beta1 * self.m[row] + (1 - self.beta1) * grad
        self.v[row] = self.beta2 * self.v[row] + (1 - self.beta2) * grad * grad
        mhat = self.m[row] / (1 - self.beta1**t)
        vhat = self.v[row] / (1 - self.beta2**t)
        values[row] -= self.lr * lr_scale * mhat / (np.sqrt(vhat) + self.eps)


def lr_decay_factor(epoch, total_epochs):
    """Stepwise x0.5 decay at each quarter of the budget."""
    if total_epochs <= 0:
        return 1.0
    return 0.5 ** ((epoch * 4) // total_epochs)


def _draw_indices(samples, rng, count):
    m = len(samples)
    if count >= m:
        return np.arange(m)
    return rng.choice(m, size=count, replace=False)


def train(dataset, spec, encoder, config: TrainConfig, init_sigma=0.01,
          threads=1, warm_start=None):
    """Jointly optimize network parameters and per-shape codes.

    Returns (ParamStore, LatentTable, TrainHistory). Deterministic for a
    fixed config: every random draw comes from a stream keyed by (seed,
    stage, index), and per-shape gradient work is merged in shape order, so
    results are independent of the thread count.

    ``warm_start``, if given, is a ``(store, table)`` pair to continue from
    (copied, not mutated) instead of fresh initialization; optimizer moments
    still start from zero.
    """
    require(len(dataset) > 0, "training needs at least one sample set")
    for samples in dataset:
        _check_samples(samples, config)
    model = SdfModel(spec, encoder)
    require(model.latent_dim >= 1, "spec leaves no room for a latent code")

    if warm_start is not None:
        prev_store, prev_table = warm_start
        require(prev_store.values.size == param_count(spec, encoder),
                "warm-start parameters do not match the spec")
        require(prev_table.codes.shape == (len(dataset), model.latent_dim),
                "warm-start latent table does not match the dataset")
        store = prev_store.copy()
        table = LatentTable(prev_table.codes.copy(), prev_table.init_sigma)
    else:
        store = model.init_params(
            stage_rng(config.seed, "param-init").integers(2**32))
        table = init_latent_table(
            len(dataset), model.latent_dim, init_sigma, config.seed)
    opt_params = Adam((len(store),), config.lr_params)
    opt_codes = Adam(table.codes.shape, config.lr_codes)
    history = TrainHistory()

    n = len(dataset)
    pool = None
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        pool = ThreadPoolExecutor(max_workers=threads)

    def shape_work(epoch, i):
        samples = dataset[i]
        rng = stage_rng(config.seed, "sample-draw", epoch * n + i)
        idx = _draw_indices(samples, rng, config.samples_per_shape_per_step)
        return shape_loss_grads(
            store, model, table.codes[i],
            samples.points[idx], samples.distances[idx],
            samples.normals[idx] if samples.has_normals else None,
            samples.near_surface_mask[idx], config,
        )

    try:
        for epoch in range(config.epochs):
            t0 = time.perf_counter()
            factor = lr_decay_factor(epoch, config.epochs)
            order = stage_rng(config.seed, "shape-order", epoch).permutation(n)
            sums = np.zeros(3)
            seen = 0
            for start in range(0, n, config.shapes_per_batch):
                chunk = order[start : start + config.shapes_per_batch]
                if pool is not None:
                    results = list(pool.map(lambda i: shape_work(epoch, i), chunk))
                else:
                    results = [shape_work(epoch, i) for i in chunk]
                pgrad_sum = np.zeros(len(store))
                for i, (parts, pgrads, cgrad) in zip(chunk, results):
                    if not np.isfinite(parts.total):
                        raise TrainingDiverged(epoch, dataset[i].shape_id)
                    pgrad_sum += pgrads
                    opt_codes.step_row(table.codes, i, cgrad, factor)
                    sums += (parts.data, parts.code, parts.normal)
                    seen += 1
                opt_params.step(store.values, pgrad_sum / len(chunk), factor)
            history.append(
                HistoryRecord(
                    epoch,
                    sums[0] / seen,
                    sums[1] / seen,
                    sums[2] / seen,
                    time.perf_counter() - t0,
                )
            )
            if epoch % 50 == 0 or epoch == config.epochs - 1:
                log.info(
                    "epoch %d: data %.5f code %.6f normal %.5f",
                    epoch, sums[0] / seen, sums[1] / seen, sums[2] / seen,
                )
    finally:
        if pool is not None:
            pool.shutdown()
    return store, table, history


def infer_latent(store, model: SdfModel, samples, config: TrainConfig, steps=None):
    """MAP inference of a code for unseen samples; parameters stay frozen.

    Minimizes the clamped data term plus the code prior over z alone (the
    normal term is a training-time regularizer and is not applied here).
    Returns (code, per-step loss trace). steps defaults to config.epochs;
    zero steps returns the zero code.
    """
    require(len(samples) > 0, "inference needs a non-empty sample set")
    if steps is None:
        steps = config.epochs
    inf_config = TrainConfig(
        epochs=steps,
        lambda_code=config.lambda_code,
        delta_clamp=config.delta_clamp,
        tau_normal=0,
        lr_params=config.lr_params,
        lr_codes=config.lr_codes,
        shapes_per_batch=1,
        samples_per_shape_per_step=config.samples_per_shape_per_step,
        seed=config.seed,
    )
    code = np.zeros(model.latent_dim)
    opt = Adam(code.shape, config.lr_codes)
    trace = []
    for step in range(steps):
        rng = stage_rng(config.seed, "infer-draw", step)
        idx = _draw_indices(samples, rng, inf_config.samples_per_shape_per_step)
        parts, _, cgrad = shape_loss_grads(
            store, model, code,
            samples.points[idx], samples.distances[idx], None,
            samples.near_surface_mask[idx], inf_config,
        )
        if not np.isfinite(parts.total):
            raise TrainingDiverged(step, samples.shape_id)
        opt.step(code, cgrad, lr_decay_factor(step, steps))
        trace.append(parts.total)
    return code, trace
