"""Artifact file formats: checkpoints, sample sets, fields, reports.

All binary formats are little-endian and round-trip bit-exactly:

* SDFN checkpoint — magic ``SDFN``, version u32, header-length u32, a
  sorted-key JSON header (network spec, encoding, latent metadata), the raw
  f64 parameter vector, then the f64 latent table.
* SDFS sample set — magic ``SDFS``, version u32, shape-id length u32 +
  utf-8 bytes, count u64, flags u32 (bit0 = has normals), f32 points,
  f32 distances, f32 normals when present, then the near-surface mask
  packed 8 bits per byte (most significant bit first).
* SFLD scalar field — magic ``SFLD``, version u32, resolution u32, bounds
  as two f64, f32 values in x-fastest order.

Reports are plain CSV; manifests are JSON with sha256 digests of the files
a stage produced, written atomically (temp file + rename).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .autodecoder import LatentTable, TrainHistory
from .encoding import encoding_from_dict
from .errors import InputError
from .extract import ScalarField
from .geometry import SdfSampleSet
from .model import SdfModel
from .network import NetworkSpec, ParamStore, build_segments, param_count

MAGIC_CHECKPOINT = b"SDFN"
MAGIC_SAMPLES = b"SDFS"
MAGIC_FIELD = b"SFLD"
FORMAT_VERSION = 1


class _Cursor:
    """Sequential reader over a byte buffer with truncation checks."""

    def __init__(self, data, path):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, n):
        if self.offset + n > len(self.data):
            raise InputError(f"{self.path}: truncated file")
        view = self.data[self.offset:self.offset + n]
        self.offset += n
        return view

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self):
        return struct.unpack("<d", self.take(8))[0]

    def array(self, dtype, count):
        raw = self.take(count * np.dtype(dtype).itemsize)
        return np.frombuffer(raw, dtype=dtype, count=count)

    def done(self):
        if self.offset != len(self.data):
            raise InputError(f"{self.path}: trailing data after payload")


def _check_magic(cursor, magic, kind):
    if cursor.take(4) != magic:
        raise InputError(f"{cursor.path} is not a {kind} file "
                         f"(bad magic bytes)")
    version = cursor.u32()
    if version != FORMAT_VERSION:
        raise InputError(f"{cursor.path}: unsupported format version "
                         f"{version}, expected {FORMAT_VERSION}")


# ------------------------------------------------------------- checkpoints


@dataclass
class Checkpoint:
    """A trained model: parameters, spec, encoder, latent table, shape ids."""

    store: ParamStore
    spec: NetworkSpec
    encoder: object
    table: LatentTable
    shape_ids: list

    def model(self) -> SdfModel:
        return SdfModel(self.spec, self.encoder)

    def index_of(self, shape_id):
        try:
            return self.shape_ids.index(shape_id)
        except ValueError:
            raise InputError(
                f"unknown shape id {shape_id!r}; checkpoint has "
                f"{self.shape_ids}") from None


def save_checkpoint(path, checkpoint: Checkpoint):
    table = checkpoint.table
    header = {
        "network": checkpoint.spec.to_dict(),
        "encoding": checkpoint.encoder.to_dict(),
        "latent": {
            "num_shapes": len(table),
            "latent_dim": int(table.latent_dim),
            "init_sigma": float(table.init_sigma),
            "shape_ids": [str(s) for s in checkpoint.shape_ids],
        },
        "param_count": int(checkpoint.store.values.size),
    }
    blob = json.dumps(header, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC_CHECKPOINT)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(checkpoint.store.values,
                                     dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(table.codes, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    cur = _Cursor(data, path)
    _check_magic(cur, MAGIC_CHECKPOINT, "SDFN checkpoint")
    hlen = cur.u32()
    try:
        header = json.loads(cur.take(hlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: corrupt checkpoint header: {exc}")
    try:
        spec = NetworkSpec.from_dict(header["network"])
        encoder = encoding_from_dict(header["encoding"])
        latent = header["latent"]
        num_shapes = int(latent["num_shapes"])
        latent_dim = int(latent["latent_dim"])
        init_sigma = float(latent["init_sigma"])
        shape_ids = [str(s) for s in latent["shape_ids"]]
        n_params = int(header["param_count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed checkpoint header: {exc}")
    expected = param_count(spec, encoder)
    if n_params != expected:
        raise InputError(
            f"{path}: header claims {n_params} parameters but the spec "
            f"needs {expected}")
    if len(shape_ids) != num_shapes:
        raise InputError(f"{path}: {len(shape_ids)} shape ids for "
                         f"{num_shapes} codes")
    values = cur.array("<f8", n_params).astype(np.float64)
    codes = cur.array("<f8", num_shapes * latent_dim).astype(np.float64)
    cur.done()
    segments, _ = build_segments(spec, encoder)
    store = ParamStore(values, segments)
    table = LatentTable(codes.reshape(num_shapes, latent_dim), init_sigma)
    checkpoint = Checkpoint(store, spec, encoder, table, shape_ids)
    model = checkpoint.model()  # validates spec/encoder fit together
    if model.latent_dim != latent_dim:
        raise InputError(
            f"{path}: latent table is {latent_dim}-dimensional but the "
            f"network leaves room for {model.latent_dim}")
    return checkpoint


# -------------------------------------------------------------- sample sets

FLAG_HAS_NORMALS = 1


def save_samples(path, samples: SdfSampleSet):
    shape_id = samples.shape_id.encode("utf-8")
    m = len(samples)
    flags = FLAG_HAS_NORMALS if samples.has_normals else 0
    with open(path, "wb") as f:
        f.write(MAGIC_SAMPLES)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(shape_id)))
        f.write(shape_id)
        f.write(struct.pack("<Q", m))
        f.write(struct.pack("<I", flags))
        f.write(np.ascontiguousarray(samples.points, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(samples.distances,
                                     dtype="<f4").tobytes())
        if samples.has_normals:
            f.write(np.ascontiguousarray(samples.normals,
                                         dtype="<f4").tobytes())
        f.write(np.packbits(samples.near_surface_mask.astype(np.uint8))
                .tobytes())


def load_samples(path) -> SdfSampleSet:
    with open(path, "rb") as f:
        data = f.read()
    cur = _Cursor(data, path)
    _check_magic(cur, MAGIC_SAMPLES, "SDFS sample")
    id_len = cur.u32()
    shape_id = cur.take(id_len).decode("utf-8")
    m = cur.u64()
    flags = cur.u32()
    points = cur.array("<f4", m * 3).astype(np.float64).reshape(m, 3)
    distances = cur.array("<f4", m).astype(np.float64)
    normals = None
    if flags & FLAG_HAS_NORMALS:
        normals = cur.array("<f4", m * 3).astype(np.float64).reshape(m, 3)
    packed = cur.array(np.uint8, (m + 7) // 8)
    mask = np.unpackbits(packed)[:m].astype(bool)
    cur.done()
    return SdfSampleSet(points, distances, normals, mask, shape_id)


# ------------------------------------------------------------ scalar fields


def save_field(path, field: ScalarField):
    with open(path, "wb") as f:
        f.write(MAGIC_FIELD)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", field.resolution))
        f.write(struct.pack("<dd", field.bounds[0], field.bounds[1]))
        f.write(field.values.ravel(order="F").astype("<f4").tobytes())


def load_field(path) -> ScalarField:
    with open(path, "rb") as f:
        data = f.read()
    cur = _Cursor(data, path)
    _check_magic(cur, MAGIC_FIELD, "SFLD field")
    r = cur.u32()
    lo = cur.f64()
    hi = cur.f64()
    flat = cur.array("<f4", r ** 3).astype(np.float64)
    cur.done()
    return ScalarField(r, (lo, hi), flat.reshape(r, r, r, order="F"))


# ------------------------------------------------------------------ reports

HISTORY_HEADER = "epoch,data_loss,code_loss,normal_loss,seconds"
EVAL_HEADER = "shape_id,cd_sum_x1e3,cd_mean_x1e3,n_points,seed"


def _fmt(x):
    return f"{float(x):.17g}"


def write_history_csv(path, history: TrainHistory):
    lines = [HISTORY_HEADER]
    for r in history.records:
        lines.append(f"{r.epoch},{_fmt(r.data_loss)},{_fmt(r.code_loss)},"
                     f"{_fmt(r.normal_loss)},{_fmt(r.seconds)}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_eval_csv(path, rows):
    """rows: iterable of (shape_id, cd_sum, cd_mean, n_points, seed); the
    chamfer values are written multiplied by 1e3 (the headline scale)."""
    lines = [EVAL_HEADER]
    for shape_id, cd_sum, cd_mean, n_points, seed in rows:
        lines.append(f"{shape_id},{_fmt(cd_sum * 1e3)},{_fmt(cd_mean * 1e3)},"
                     f"{int(n_points)},{int(seed)}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------- manifests


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, produced_files, config_snapshot=None, seeds=None,
                   timings=None, inputs=None):
    """Record a stage's outputs (with digests) and how they were made.

    Written atomically so a manifest never describes a half-finished stage.
    Timings are wall-clock and vary run to run; digests do not.
    """
    from . import __version__

    files = {}
    for p in produced_files:
        files[os.path.basename(p)] = {
            "sha256": file_digest(p),
            "bytes": os.path.getsize(p),
        }
    payload = {
        "version": __version__,
        "files": files,
        "config": config_snapshot or {},
        "seeds": seeds or {},
        "inputs": inputs or {},
        "timings": timings or {},
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)
