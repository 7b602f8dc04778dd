"""Plain-text run configuration: ``key = value`` lines, ``#`` comments.

One flat namespace covers the whole pipeline (architecture, training,
sampling, extraction); every key is optional and falls back to the default
listed in ``SCHEMA``.  Parse errors carry the offending line number.
Command-line flags override file values (see cli module).

Recognized keys:

  architecture   latent_dim, hidden_width, hidden_layers,
                 activation (relu|siren|hosc), omega0_first, omega0_hidden,
                 beta_init
  encoding       encoding (none|fourier|hash), fourier_frequencies,
                 fourier_base, hash_levels, hash_features, hash_table_log2,
                 hash_base_resolution, hash_max_resolution
  training       epochs, lr_params, lr_codes, lambda_code, delta_clamp,
                 tau_normal (0|1), shapes_per_batch, samples_per_step,
                 init_sigma, seed, infer_steps (0 = same as epochs)
  sampling       samples_per_shape, near_fraction, sigma_coarse,
                 sigma_fine, sample_cube, normals (on|off)
  extraction     resolution
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .activations import Hosc, Relu, Sine
from .autodecoder import TrainConfig
from .encoding import FourierEncoding, HashEncoding, IdentityEncoding
from .errors import ConfigError
from .network import mlp_spec

SAMPLING_CUBE = 1.05  # sampling/extraction domain half-width

ACTIVATION_CHOICES = ("relu", "siren", "hosc")
ENCODING_CHOICES = ("none", "fourier", "hash")
SWITCH_CHOICES = ("on", "off")


def _choice(options):
    def convert(text):
        if text not in options:
            raise ValueError(f"expected one of {'|'.join(options)}, "
                             f"got {text!r}")
        return text
    return convert


@dataclass(frozen=True)
class RunSettings:
    """Everything a run needs, resolvable from a config file plus flags."""

    # architecture
    latent_dim: int = 16
    hidden_width: int = 64
    hidden_layers: int = 3
    activation: str = "siren"
    omega0_first: float = 30.0
    omega0_hidden: float = 30.0
    beta_init: float = 1.0
    # encoding
    encoding: str = "none"
    fourier_frequencies: int = 6
    fourier_base: float = 2.0
    hash_levels: int = 8
    hash_features: int = 2
    hash_table_log2: int = 15
    hash_base_resolution: int = 8
    hash_max_resolution: int = 128
    # training
    epochs: int = 200
    lr_params: float = 1e-4
    lr_codes: float = 1e-3
    lambda_code: float = 1e-4
    delta_clamp: float = 0.1
    tau_normal: int = 0
    shapes_per_batch: int = 8
    samples_per_step: int = 512
    init_sigma: float = 0.01
    seed: int = 0
    infer_steps: int = 0
    # sampling
    samples_per_shape: int = 20000
    near_fraction: float = 0.95
    sigma_coarse: float = 0.05
    sigma_fine: float = 0.005
    sample_cube: float = SAMPLING_CUBE
    normals: str = "on"
    # extraction
    resolution: int = 128

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


_CONVERTERS = {
    "activation": _choice(ACTIVATION_CHOICES),
    "encoding": _choice(ENCODING_CHOICES),
    "normals": _choice(SWITCH_CHOICES),
}
for _f in fields(RunSettings):
    _CONVERTERS.setdefault(_f.name, _f.type if callable(_f.type) else
                           {"int": int, "float": float, "str": str}[_f.type])


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines into a RunSettings over the defaults."""
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}",
                              line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONVERTERS:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        if key in seen:
            raise ConfigError(
                f"duplicate key {key!r} (first set on line {seen[key][1]})",
                line=lineno)
        try:
            seen[key] = (_CONVERTERS[key](value), lineno)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", line=lineno)
    return RunSettings(**{k: v for k, (v, _) in seen.items()})


def load_config(path):
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}")
    return parse_config_text(text, source=str(path))


def apply_overrides(settings: RunSettings, **overrides) -> RunSettings:
    """Return settings with every non-None override applied (flags win)."""
    updates = {}
    for key, value in overrides.items():
        if value is None:
            continue
        try:
            updates[key] = _CONVERTERS[key](value) if isinstance(value, str) \
                else value
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}")
    return replace(settings, **updates) if updates else settings


# ------------------------------------------------------- component builders


def build_encoder(settings: RunSettings):
    if settings.encoding == "none":
        return IdentityEncoding()
    if settings.encoding == "fourier":
        return FourierEncoding(num_frequencies=settings.fourier_frequencies,
                               base=settings.fourier_base)
    return HashEncoding(
        num_levels=settings.hash_levels,
        features_per_level=settings.hash_features,
        table_size_log2=settings.hash_table_log2,
        base_resolution=settings.hash_base_resolution,
        max_resolution=settings.hash_max_resolution,
        bounds=(-SAMPLING_CUBE, SAMPLING_CUBE),
    )


def build_model_parts(settings: RunSettings):
    """(NetworkSpec, encoder) for these settings."""
    encoder = build_encoder(settings)

    def factory(layer_index):
        if settings.activation == "relu":
            return Relu()
        if settings.activation == "hosc":
            return Hosc(beta_init=settings.beta_init)
        omega0 = (settings.omega0_first if layer_index == 0
                  else settings.omega0_hidden)
        return Sine(omega0=omega0)

    spec = mlp_spec(settings.latent_dim + encoder.out_dim,
                    settings.hidden_width, settings.hidden_layers, factory)
    return spec, encoder


def build_train_config(settings: RunSettings) -> TrainConfig:
    return TrainConfig(
        epochs=settings.epochs,
        lambda_code=settings.lambda_code,
        delta_clamp=settings.delta_clamp,
        tau_normal=settings.tau_normal,
        lr_params=settings.lr_params,
        lr_codes=settings.lr_codes,
        shapes_per_batch=settings.shapes_per_batch,
        samples_per_shape_per_step=settings.samples_per_step,
        seed=settings.seed,
    )
