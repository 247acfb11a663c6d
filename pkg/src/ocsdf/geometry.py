"""Voxelization of a learned scalar field and iso-surface extraction with
table-driven marching cubes, plus Wavefront OBJ export.
"""

from dataclasses import dataclass

import numpy as np

from ._mc_tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE


@dataclass
class VoxelGrid:
    """Scalar samples on a regular 3D lattice.

    values[i, j, k] is the field at origin + (i, j, k) * spacing.
    """

    origin: np.ndarray
    spacing: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.spacing = np.asarray(self.spacing, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.origin.shape != (3,) or self.spacing.shape != (3,):
            raise ValueError("origin and spacing must be 3-vectors")
        if not np.all(self.spacing > 0):
            raise ValueError("spacing must be positive")
        if self.values.ndim != 3:
            raise ValueError("values must be a 3D array")

    @property
    def dims(self):
        return self.values.shape


@dataclass
class TriMesh:
    vertices: np.ndarray  # (m, 3)
    faces: np.ndarray     # (k, 3) vertex indices

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise ValueError("face index out of range")
            if np.any((self.faces[:, 0] == self.faces[:, 1])
                      | (self.faces[:, 1] == self.faces[:, 2])
                      | (self.faces[:, 0] == self.faces[:, 2])):
                raise ValueError("degenerate face (repeated vertex index)")

    @property
    def is_empty(self):
        return len(self.faces) == 0


def voxelize(field, box, resolution, batch_size=8192):
    """Sample a scalar field on a regular grid covering a 3D box.

    field is any callable mapping an (n, 3) array to n values (a trained
    network or a closed-form test field). resolution gives the number of
    lattice points per axis; spacing is (high - low) / (resolution - 1) so
    the grid includes both box faces.
    """
    if box.dim != 3:
        raise ValueError("voxelization needs a 3D box")
    res = np.broadcast_to(np.asarray(resolution, dtype=np.int64), (3,)).copy()
    if np.any(res < 2):
        raise ValueError("resolution must be >= 2 on every axis")
    spacing = (box.high - box.low) / (res - 1)
    axes = [box.low[a] + spacing[a] * np.arange(res[a]) for a in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    values = np.empty(len(points))
    for start in range(0, len(points), batch_size):
        stop = start + batch_size
        values[start:stop] = field(points[start:stop])
    return VoxelGrid(origin=box.low.copy(), spacing=spacing,
                     values=values.reshape(tuple(res)))


def choose_level(train_scores, percentile=1.0):
    """Iso level from the training-score distribution: the given empirical
    percentile (linear interpolation between order statistics)."""
    scores = np.asarray(train_scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("train_scores must be non-empty")
    if not 0.0 <= percentile <= 100.0:
        raise ValueError("percentile must be in [0, 100]")
    return float(np.percentile(scores, percentile))


def marching_cubes(grid, level):
    """Extract the triangle mesh of the iso-surface {field == level}.

    Standard 256-case lookup with linear interpolation along lattice edges:
    every mesh vertex sits on an edge whose endpoint values straddle the
    level, placed so the interpolated value equals the level exactly.
    Vertices shared between cells are deduplicated by their lattice edge, so
    the mesh of a level set away from the grid boundary is closed. If no
    cell crosses the level the mesh is empty.
    """
    V = grid.values
    below = V < level
    # per-cell 8-bit corner pattern, bit i set when corner i is below
    idx = np.zeros(tuple(d - 1 for d in V.shape), dtype=np.int64)
    for bit, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        ex = slice(dx, V.shape[0] - 1 + dx)
        ey = slice(dy, V.shape[1] - 1 + dy)
        ez = slice(dz, V.shape[2] - 1 + dz)
        idx |= below[ex, ey, ez].astype(np.int64) << bit
    active = np.argwhere((idx != 0) & (idx != 0xFF))

    vert_ids = {}
    vertices = []
    faces = []
    for cx, cy, cz in active:
        pattern = idx[cx, cy, cz]
        crossed = EDGE_TABLE[pattern]
        edge_vertex = {}
        for e in range(12):
            if not crossed & (1 << e):
                continue
            ca, cb = EDGE_CORNERS[e]
            pa = (cx + CORNER_OFFSETS[ca][0], cy + CORNER_OFFSETS[ca][1],
                  cz + CORNER_OFFSETS[ca][2])
            pb = (cx + CORNER_OFFSETS[cb][0], cy + CORNER_OFFSETS[cb][1],
                  cz + CORNER_OFFSETS[cb][2])
            key = (min(pa, pb), max(pa, pb))
            vid = vert_ids.get(key)
            if vid is None:
                va, vb = V[pa], V[pb]
                t = (level - va) / (vb - va)
                point = grid.origin + grid.spacing * (
                    np.asarray(pa, dtype=np.float64)
                    + t * (np.asarray(pb, dtype=np.float64) - np.asarray(pa, dtype=np.float64)))
                vid = len(vertices)
                vertices.append(point)
                vert_ids[key] = vid
            edge_vertex[e] = vid
        row = TRI_TABLE[pattern]
        for k in range(0, 16, 3):
            if row[k] < 0:
                break
            faces.append((edge_vertex[row[k]], edge_vertex[row[k + 1]],
                          edge_vertex[row[k + 2]]))
    if not faces:
        return TriMesh(vertices=np.zeros((0, 3)), faces=np.zeros((0, 3), dtype=np.int64))
    return TriMesh(vertices=np.array(vertices), faces=np.array(faces, dtype=np.int64))


def export_obj(mesh, path):
    """Write Wavefront OBJ text: `v x y z` lines then 1-based `f i j k`.

    Coordinates carry 9 significant digits, enough to round-trip float64 to
    visual precision; an empty mesh yields a file with only the header
    comment.
    """
    with open(path, "w") as fh:
        fh.write(f"# triangle mesh: {len(mesh.vertices)} vertices, "
                 f"{len(mesh.faces)} faces\n")
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def load_obj(path):
    """Minimal OBJ reader for round-trip checks (v/f lines only)."""
    vertices, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0] == "#":
                continue
            if parts[0] == "v":
                vertices.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    if not faces:
        return TriMesh(vertices=np.array(vertices).reshape(-1, 3),
                       faces=np.zeros((0, 3), dtype=np.int64))
    return TriMesh(vertices=np.array(vertices), faces=np.array(faces, dtype=np.int64))


def mesh_edge_face_counts(mesh):
    """Count faces per undirected edge; a closed mesh has exactly two."""
    counts = {}
    for a, b, c in mesh.faces:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            counts[key] = counts.get(key, 0) + 1
    return counts
