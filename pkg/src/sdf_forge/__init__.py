"""Neural signed-distance-field toolkit: auto-decoder training, analytic
and mesh SDF sampling, grid extraction, and Chamfer evaluation."""

from .activations import Hosc, Identity, Relu, Sine
from .autodecoder import (
    LatentTable,
    TrainConfig,
    TrainHistory,
    infer_latent,
    init_latent_table,
    interpolate_latents,
    train,
)
from .config import RunSettings, load_config, parse_config_text
from .encoding import FourierEncoding, HashEncoding, IdentityEncoding
from .errors import (
    ConfigError,
    ForgeError,
    InputError,
    NonWatertightMeshError,
    NumericalError,
    TrainingDiverged,
)
from .estimator import SdfAutoDecoder
from .extract import ScalarField, field_from_function, marching_cubes, sample_grid
from .geometry import (
    Box,
    Sphere,
    Torus,
    TriangleMesh,
    load_mesh,
    normalize_to_unit,
    parse_primitive,
    sample_analytic,
    sample_sdf,
    save_mesh,
)
from .metrics import chamfer, chamfer_brute_force, sample_surface_points
from .model import SdfModel
from .network import (
    NetworkSpec,
    ParamStore,
    forward,
    forward_with_spatial_grad,
    init_network,
    mlp_spec,
    param_count,
)
from .storage import (
    Checkpoint,
    load_checkpoint,
    load_field,
    load_samples,
    save_checkpoint,
    save_field,
    save_samples,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "Checkpoint",
    "ConfigError",
    "ForgeError",
    "FourierEncoding",
    "HashEncoding",
    "Hosc",
    "Identity",
    "IdentityEncoding",
    "InputError",
    "LatentTable",
    "NetworkSpec",
    "NonWatertightMeshError",
    "NumericalError",
    "ParamStore",
    "Relu",
    "RunSettings",
    "ScalarField",
    "SdfAutoDecoder",
    "SdfModel",
    "Sine",
    "Sphere",
    "Torus",
    "TrainConfig",
    "TrainHistory",
    "TrainingDiverged",
    "TriangleMesh",
    "chamfer",
    "chamfer_brute_force",
    "field_from_function",
    "forward",
    "forward_with_spatial_grad",
    "infer_latent",
    "init_latent_table",
    "interpolate_latents",
    "load_checkpoint",
    "load_config",
    "load_field",
    "load_mesh",
    "load_samples",
    "marching_cubes",
    "mlp_spec",
    "normalize_to_unit",
    "param_count",
    "parse_config_text",
    "parse_primitive",
    "sample_analytic",
    "sample_grid",
    "sample_sdf",
    "sample_surface_points",
    "save_checkpoint",
    "save_field",
    "save_mesh",
    "save_samples",
    "train",
]
