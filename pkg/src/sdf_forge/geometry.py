"""Data preparation: meshes, unit normalization, and SDF sampling.

Shapes are normalized so the farthest vertex from the bounding-box center
sits at radius 1/1.03 (a 3% margin inside the unit ball). Sample sets
carry signed distances (negative inside), optional unit normals equal to
the gradient of the signed distance, and a near-surface mask that defines
where normal supervision applies.

Analytic primitives (sphere, box, torus) provide closed-form distances and
normals; they are both the desk-scale training data and the ground-truth
oracle for the mesh-based pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bvh import build_bvh, count_ray_crossings, query_closest
from .errors import InputError, NonWatertightMeshError
from .validation import as_points, check_finite

DEFAULT_MARGIN = 1.03  # farthest vertex lands at 1/margin after normalization
DEFAULT_CUBE = 1.05  # uniform far-field samples live in [-cube, cube]^3
DEFAULT_NEAR_FRACTION = 0.95
DEFAULT_SIGMAS = (0.05, 0.005)


# ------------------------------------------------------------------ meshes


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int64

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise InputError(
                    f"face index out of range: mesh has {len(self.vertices)} vertices"
                )
            degenerate = (
                (self.faces[:, 0] == self.faces[:, 1])
                | (self.faces[:, 1] == self.faces[:, 2])
                | (self.faces[:, 0] == self.faces[:, 2])
            )
            if degenerate.any():
                raise InputError(
                    f"face {int(np.nonzero(degenerate)[0][0])} repeats a vertex"
                )

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_faces(self):
        return len(self.faces)

    def triangle_areas(self):
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def load_mesh(path) -> TriangleMesh:
    """Read an ASCII OBJ (v/f records only; polygons fan-triangulated)."""
    vertices = []
    faces = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as e:
        raise InputError(f"cannot read mesh {path}: {e.strerror}") from e
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise InputError(f"{path}:{lineno}: vertex needs 3 coordinates")
            try:
                vertices.append([float(p) for p in parts[1:4]])
            except ValueError as e:
                raise InputError(f"{path}:{lineno}: bad vertex: {e}") from e
        elif parts[0] == "f":
            if len(parts) < 4:
                raise InputError(f"{path}:{lineno}: face needs 3+ vertices")
            try:
                # "f 1 2 3" or "f 1/1/1 2/2/2 3/3/3"; 1-based indices
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            except ValueError as e:
                raise InputError(f"{path}:{lineno}: bad face: {e}") from e
            for corner in idx:
                if corner < 0 or corner >= len(vertices):
                    raise InputError(
                        f"{path}:{lineno}: face {len(faces)} references "
                        f"vertex {corner + 1} of {len(vertices)}"
                    )
            for k in range(1, len(idx) - 1):  # fan for polygons
                faces.append([idx[0], idx[k], idx[k + 1]])
        # other record types (vn, vt, usemtl, ...) are ignored
    if not vertices or not faces:
        raise InputError(f"{path}: empty mesh (no v/f records)")
    return TriangleMesh(np.array(vertices), np.array(faces))


def save_mesh(path, mesh: TriangleMesh):
    """Write ASCII OBJ with full float64 precision (%.17g round-trips)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {mesh.num_vertices} vertices, {mesh.num_faces} faces\n")
        for v in mesh.vertices:
            fh.write("v %.17g %.17g %.17g\n" % (v[0], v[1], v[2]))
        for f in mesh.faces:
            fh.write("f %d %d %d\n" % (f[0] + 1, f[1] + 1, f[2] + 1))


@dataclass(frozen=True)
class NormalizeTransform:
    """Normalized = (original - center) * scale; invertible record."""

    center: tuple
    scale: float

    def apply(self, points):
        return (np.asarray(points, dtype=np.float64) - self.center) * self.scale

    def invert(self, points):
        return np.asarray(points, dtype=np.float64) / self.scale + self.center


def normalize_to_unit(mesh: TriangleMesh, margin=DEFAULT_MARGIN):
    """Center on the bounding box, scale farthest vertex to 1/margin."""
    if mesh.num_vertices == 0:
        raise InputError("cannot normalize an empty mesh")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    center = 0.5 * (lo + hi)
    radius = np.linalg.norm(mesh.vertices - center, axis=1).max()
    if radius <= 0:
        raise InputError("mesh has zero extent")
    scale = (1.0 / margin) / radius
    transform = NormalizeTransform(center=tuple(center), scale=float(scale))
    return TriangleMesh(transform.apply(mesh.vertices), mesh.faces.copy()), transform


def mesh_edges(mesh: TriangleMesh):
    """Undirected edges and the number of faces sharing each."""
    e = np.concatenate(
        [mesh.faces[:, [0, 1]], mesh.faces[:, [1, 2]], mesh.faces[:, [2, 0]]]
    )
    e.sort(axis=1)
    return np.unique(e, axis=0, return_counts=True)


def euler_characteristic(mesh: TriangleMesh) -> int:
    edges, _ = mesh_edges(mesh)
    used = np.unique(mesh.faces)
    return int(used.size - len(edges) + mesh.num_faces)


def is_closed(mesh: TriangleMesh) -> bool:
    """True when every edge is shared by exactly two faces."""
    if mesh.num_faces == 0:
        return False
    _, counts = mesh_edges(mesh)
    return bool((counts == 2).all())


def triangulate_sphere(radius=0.5, subdivisions=3, center=(0.0, 0.0, 0.0)):
    """Icosphere oracle mesh: V = 10*4^k + 2 (k=4 gives 2562 vertices)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = list(verts / np.linalg.norm(verts[0]))
    for _ in range(subdivisions):
        midpoint = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh(v, np.array(faces))


def sample_on_mesh(mesh: TriangleMesh, n, rng):
    """Area-weighted uniform surface samples (barycentric per triangle)."""
    if mesh.num_faces == 0:
        raise InputError("cannot sample an empty mesh")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise InputError("mesh has zero surface area")
    tri = rng.choice(mesh.num_faces, size=n, p=areas / total)
    u = rng.uniform(size=n)
    v = rng.uniform(size=n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    a = mesh.vertices[mesh.faces[tri, 0]]
    b = mesh.vertices[mesh.faces[tri, 1]]
    c = mesh.vertices[mesh.faces[tri, 2]]
    return a + u[:, None] * (b - a) + v[:, None] * (c - a)


# -------------------------------------------------------------- primitives


@dataclass(frozen=True)
class Sphere:
    radius: float
    center: tuple = (0.0, 0.0, 0.0)
    kind = "sphere"

    def __post_init__(self):
        if not self.radius > 0:
            raise InputError(f"sphere radius must be positive, got {self.radius}")

    def distance(self, points):
        p = as_points(points) - self.center
        return np.linalg.norm(p, axis=1) - self.radius

    def normal(self, points):
        p = as_points(points) - self.center
        r = np.linalg.norm(p, axis=1, keepdims=True)
        out = np.where(r > 1e-15, p / np.maximum(r, 1e-15), [1.0, 0.0, 0.0])
        return out

    def surface_points(self, n, rng):
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d * self.radius + self.center


@dataclass(frozen=True)
class Box:
    half_extents: tuple
    center: tuple = (0.0, 0.0, 0.0)
    kind = "box"

    def __post_init__(self):
        object.__setattr__(self, "half_extents", tuple(float(h) for h in self.half_extents))
        if len(self.half_extents) != 3 or min(self.half_extents) <= 0:
            raise InputError(f"box half-extents must be 3 positives, got {self.half_extents}")

    def distance(self, points):
        p = as_points(points) - self.center
        q = np.abs(p) - np.asarray(self.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def normal(self, points):
        p = as_points(points) - self.center
        q = np.abs(p) - np.asarray(self.half_extents)
        sign = np.where(p >= 0, 1.0, -1.0)
        g_out = np.maximum(q, 0.0) * sign
        norms = np.linalg.norm(g_out, axis=1, keepdims=True)
        # inside: nearest face is the axis where q is largest (least negative)
        axis = q.argmax(axis=1)
        g_in = np.zeros_like(p)
        g_in[np.arange(len(p)), axis] = sign[np.arange(len(p)), axis]
        outside = (q > 0).any(axis=1)
        return np.where(
            outside[:, None], g_out / np.maximum(norms, 1e-300), g_in
        )

    def surface_points(self, n, rng):
        h = np.asarray(self.half_extents)
        # six faces, picked by area, uniform within each
        areas = np.array([h[1] * h[2], h[1] * h[2], h[0] * h[2], h[0] * h[2],
                          h[0] * h[1], h[0] * h[1]])
        face = rng.choice(6, size=n, p=areas / areas.sum())
        uv = rng.uniform(-1.0, 1.0, size=(n, 2))
        pts = np.empty((n, 3))
        for f in range(6):
            m = face == f
            axis = f // 2
            side = 1.0 if f % 2 == 0 else -1.0
            others = [a for a in range(3) if a != axis]
            pts[m, axis] = side * h[axis]
            pts[m, others[0]] = uv[m, 0] * h[others[0]]
            pts[m, others[1]] = uv[m, 1] * h[others[1]]
        return pts + self.center


@dataclass(frozen=True)
class Torus:
    major: float  # ring radius (z-axis torus)
    minor: float  # tube radius
    center: tuple = (0.0, 0.0, 0.0)
    kind = "torus"

    def __post_init__(self):
        if not (self.major > 0 and self.minor > 0 and self.minor < self.major):
            raise InputError(
                f"torus needs 0 < minor < major, got {self.major}, {self.minor}"
            )

    def distance(self, points):
        p = as_points(points) - self.center
        s = np.hypot(p[:, 0], p[:, 1])
        return np.hypot(s - self.major, p[:, 2]) - self.minor

    def normal(self, points):
        p = as_points(points) - self.center
        s = np.hypot(p[:, 0], p[:, 1])
        safe = np.maximum(s, 1e-15)
        ring = np.stack(
            [self.major * p[:, 0] / safe, self.major * p[:, 1] / safe,
             np.zeros(len(p))], axis=1
        )
        d = p - ring
        n = np.linalg.norm(d, axis=1, keepdims=True)
        return np.where(n > 1e-15, d / np.maximum(n, 1e-15), [0.0, 0.0, 1.0])

    def surface_points(self, n, rng):
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        # tube angle needs density proportional to (major + minor*cos(phi))
        phi = np.empty(n)
        have = 0
        while have < n:
            cand = rng.uniform(0.0, 2.0 * np.pi, size=2 * (n - have))
            accept = rng.uniform(size=cand.size) < (
                (self.major + self.minor * np.cos(cand)) / (self.major + self.minor)
            )
            take = cand[accept][: n - have]
            phi[have : have + take.size] = take
            have += take.size
        ring = self.major + self.minor * np.cos(phi)
        pts = np.stack(
            [ring * np.cos(theta), ring * np.sin(theta), self.minor * np.sin(phi)],
            axis=1,
        )
        return pts + self.center


PRIMITIVE_KINDS = {"sphere": Sphere, "box": Box, "torus": Torus}


def parse_primitive(text: str):
    """Parse ``kind:params`` specs, e.g. sphere:0.5, box:0.3,0.2,0.4,
    torus:0.4,0.1."""
    kind, sep, rest = text.partition(":")
    if not sep:
        raise InputError(f"primitive spec needs kind:params, got {text!r}")
    try:
        params = [float(p) for p in rest.split(",") if p != ""]
    except ValueError as e:
        raise InputError(f"bad primitive parameters in {text!r}: {e}") from e
    if kind == "sphere":
        if len(params) != 1:
            raise InputError(f"sphere takes one radius, got {text!r}")
        return Sphere(radius=params[0])
    if kind == "box":
        if len(params) != 3:
            raise InputError(f"box takes three half-extents, got {text!r}")
        return Box(half_extents=tuple(params))
    if kind == "torus":
        if len(params) != 2:
            raise InputError(f"torus takes major,minor radii, got {text!r}")
        return Torus(major=params[0], minor=params[1])
    raise InputError(f"unknown primitive kind {kind!r} in {text!r}")


# -------------------------------------------------------------- sample sets


@dataclass
class SdfSampleSet:
    """Point samples of one shape's signed distance field.

    Sign convention: negative inside, positive outside. Normals, where
    present, are the unit gradient of the signed distance.
    """

    points: np.ndarray  # (M, 3)
    distances: np.ndarray  # (M,)
    normals: np.ndarray | None  # (M, 3) or None
    near_surface_mask: np.ndarray  # (M,) bool
    shape_id: str

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.distances = np.asarray(self.distances, dtype=np.float64).ravel()
        self.near_surface_mask = np.asarray(self.near_surface_mask, dtype=bool).ravel()
        m = len(self.points)
        if self.distances.shape != (m,) or self.near_surface_mask.shape != (m,):
            raise InputError("sample set arrays disagree on length")
        check_finite(self.points, "points")
        check_finite(self.distances, "distances")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(self.normals) != m:
                raise InputError("sample set arrays disagree on length")
            norms = np.linalg.norm(self.normals, axis=1)
            if m and np.abs(norms - 1.0).max() > 1e-5:
                raise InputError("stored normals must be unit length")

    def __len__(self):
        return len(self.points)

    @property
    def has_normals(self):
        return self.normals is not None

    def without_normals(self):
        return SdfSampleSet(
            self.points, self.distances, None, self.near_surface_mask, self.shape_id
        )


def _band_points(surface_sampler, total, near_fraction, sigmas, cube, rng):
    """Shared banding: two Gaussian near-surface bands plus a uniform rest."""
    if total < 1:
        raise InputError(f"sample total must be >= 1, got {total}")
    if not 0.0 <= near_fraction <= 1.0:
        raise InputError(f"near_fraction must lie in [0,1], got {near_fraction}")
    n_near = int(round(total * near_fraction))
    n1 = n_near // 2
    n2 = n_near - n1
    n_far = total - n_near
    parts = []
    for count, sigma in ((n1, sigmas[0]), (n2, sigmas[1])):
        if count:
            base = surface_sampler(count, rng)
            parts.append(base + rng.normal(scale=sigma, size=(count, 3)))
    if n_far:
        parts.append(rng.uniform(-cube, cube, size=(n_far, 3)))
    return np.concatenate(parts, axis=0)


def sample_analytic(
    sdf,
    total,
    near_fraction=DEFAULT_NEAR_FRACTION,
    sigmas=DEFAULT_SIGMAS,
    seed=0,
    cube=DEFAULT_CUBE,
    shape_id=None,
) -> SdfSampleSet:
    """Exact sample set from a closed-form primitive."""
    rng = np.random.default_rng(seed)
    points = _band_points(sdf.surface_points, total, near_fraction, sigmas, cube, rng)
    distances = sdf.distance(points)
    normals = sdf.normal(points)
    mask = np.abs(distances) <= 2.0 * max(sigmas)
    return SdfSampleSet(
        points, distances, normals, mask,
        shape_id=shape_id or f"{sdf.kind}",
    )


NUM_SIGN_RAYS = 11


def _parity_signs(bvh, points, rng, max_ambiguous=0.05):
    """Majority vote over ray-crossing parities; +1 outside, -1 inside."""
    directions = rng.normal(size=(NUM_SIGN_RAYS, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    votes = np.zeros(len(points), dtype=np.int64)
    for d in directions:
        votes += count_ray_crossings(bvh, points, d) % 2
    inside = votes * 2 > NUM_SIGN_RAYS  # ties count as outside (positive)
    minority = np.minimum(votes, NUM_SIGN_RAYS - votes)
    ambiguous = float(np.mean(minority >= 3))
    if ambiguous > max_ambiguous:
        raise NonWatertightMeshError(
            f"sign votes disagree on {ambiguous:.1%} of points "
            f"(threshold {max_ambiguous:.1%}); mesh looks non-watertight"
        )
    # points strictly outside the bounding box are always positive
    lo = bvh.node_lo[0]
    hi = bvh.node_hi[0]
    outside_bbox = ((points < lo) | (points > hi)).any(axis=1)
    inside &= ~outside_bbox
    return np.where(inside, -1.0, 1.0)


def sample_sdf(
    mesh: TriangleMesh,
    total,
    near_fraction=DEFAULT_NEAR_FRACTION,
    sigmas=DEFAULT_SIGMAS,
    seed=0,
    cube=DEFAULT_CUBE,
    shape_id="mesh",
    max_ambiguous=0.05,
) -> SdfSampleSet:
    """Sample signed distances to a triangle mesh (BVH + ray parity)."""
    rng = np.random.default_rng(seed)
    bvh = build_bvh(mesh.vertices, mesh.faces)
    points = _band_points(
        lambda n, r: sample_on_mesh(mesh, n, r), total, near_fraction, sigmas, cube, rng
    )
    closest, d2, tri = query_closest(bvh, points)
    unsigned = np.sqrt(d2)
    signs = _parity_signs(bvh, points, rng, max_ambiguous)
    distances = signs * unsigned

    # normal = unit gradient of the signed distance: direction from the
    # closest surface point to the sample, flipped for interior points
    delta = points - closest
    lengths = np.linalg.norm(delta, axis=1, keepdims=True)
    normals = np.where(lengths > 1e-12, delta / np.maximum(lengths, 1e-12), 0.0)
    normals *= signs[:, None]
    degenerate = (lengths[:, 0] <= 1e-12)
    if degenerate.any():
        # on-surface samples: fall back to the closest triangle's face normal
        fn = np.cross(
            bvh.tri_b[tri[degenerate]] - bvh.tri_a[tri[degenerate]],
            bvh.tri_c[tri[degenerate]] - bvh.tri_a[tri[degenerate]],
        )
        fn /= np.maximum(np.linalg.norm(fn, axis=1, keepdims=True), 1e-300)
        normals[degenerate] = fn

    mask = np.abs(distances) <= 2.0 * max(sigmas)
    return SdfSampleSet(points, distances, normals, mask, shape_id=shape_id)
