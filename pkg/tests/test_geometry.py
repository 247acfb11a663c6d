import numpy as np
import pytest

from ocsdf import lipnet as ln
from ocsdf.geometry import (TriMesh, VoxelGrid, choose_level, export_obj,
                            load_obj, marching_cubes, mesh_edge_face_counts,
                            voxelize)
from ocsdf.sampler import DomainBox


def sphere_field(radius=1.0):
    return lambda P: radius - np.linalg.norm(P, axis=1)


def sphere_grid(resolution, half_width=1.5):
    box = DomainBox.cube(half_width, 3)
    return voxelize(sphere_field(), box, resolution)


class TestVoxelize:
    def test_two_cubed_grid_evaluates_corners(self):
        net = ln.LipNet([(ln.OrthoDense(np.array([[1.0, 0.0, 0.0]])),
                          ln.Activation("identity"))])
        box = DomainBox(low=[0.0, 0.0, 0.0], high=[1.0, 1.0, 1.0])
        grid = voxelize(net, box, 2)
        assert grid.values.shape == (2, 2, 2)
        assert np.array_equal(grid.values[0], np.zeros((2, 2)))
        assert np.array_equal(grid.values[1], np.ones((2, 2)))

    def test_analytic_field_matches_closed_form_exactly(self):
        box = DomainBox.cube(1.5, 3)
        grid = voxelize(sphere_field(), box, 9)
        axes = [box.low[a] + grid.spacing[a] * np.arange(9) for a in range(3)]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        expected = 1.0 - np.sqrt(gx**2 + gy**2 + gz**2)
        assert np.array_equal(grid.values, expected)

    def test_point_count(self):
        grid = voxelize(sphere_field(), DomainBox.cube(1.0, 3), (3, 4, 5))
        assert grid.values.size == 3 * 4 * 5
        assert grid.dims == (3, 4, 5)

    def test_validation(self):
        with pytest.raises(ValueError):
            voxelize(sphere_field(), DomainBox.cube(1.0, 2), 8)
        with pytest.raises(ValueError):
            voxelize(sphere_field(), DomainBox.cube(1.0, 3), 1)


class TestChooseLevel:
    def test_median_interpolation(self):
        assert choose_level([1.0, 2.0, 3.0, 4.0], 50.0) == 2.5

    def test_percentile_zero_is_minimum(self):
        assert choose_level([3.0, 1.0, 2.0], 0.0) == 1.0

    def test_first_percentile_of_uniform(self):
        scores = np.random.default_rng(0).uniform(0, 1, 1000)
        assert abs(choose_level(scores, 1.0) - 0.01) <= 0.01

    def test_validation(self):
        with pytest.raises(ValueError):
            choose_level([], 1.0)
        with pytest.raises(ValueError):
            choose_level([1.0], 101.0)


class TestMarchingCubes:
    def test_all_values_one_side_gives_empty_mesh(self):
        grid = sphere_grid(8)
        mesh = marching_cubes(grid, 10.0)
        assert mesh.is_empty
        assert len(mesh.vertices) == 0

    def test_single_corner_yields_one_triangle(self):
        values = np.ones((2, 2, 2))
        values[0, 0, 0] = -1.0
        grid = VoxelGrid(origin=np.zeros(3), spacing=np.ones(3), values=values)
        mesh = marching_cubes(grid, 0.0)
        assert len(mesh.faces) == 1
        assert len(mesh.vertices) == 3

    def test_sphere_vertices_on_the_surface(self):
        grid = sphere_grid(64)
        mesh = marching_cubes(grid, 0.0)
        radii = np.linalg.norm(mesh.vertices, axis=1)
        assert np.abs(radii - 1.0).max() <= 1.5 * grid.spacing.max()

    def test_sphere_mesh_is_closed(self):
        mesh = marching_cubes(sphere_grid(32), 0.0)
        counts = mesh_edge_face_counts(mesh)
        assert set(counts.values()) == {2}

    def test_resolution_doubling_halves_radius_error(self):
        err = {}
        for res in (32, 64):
            mesh = marching_cubes(sphere_grid(res), 0.0)
            err[res] = np.abs(np.linalg.norm(mesh.vertices, axis=1) - 1.0).max()
        assert err[64] <= err[32] / 2.0

    def test_vertices_interpolate_to_the_level_exactly(self):
        grid = sphere_grid(16)
        level = 0.05
        mesh = marching_cubes(grid, level)
        assert not mesh.is_empty
        for v in mesh.vertices:
            lattice = (v - grid.origin) / grid.spacing
            frac = lattice - np.floor(lattice)
            # snap near-integer coordinates; exactly one axis is fractional
            axes = [a for a in range(3) if min(frac[a], 1 - frac[a]) > 1e-13]
            assert len(axes) <= 1
            if not axes:
                continue  # vertex landed on a lattice point (t == 0 or 1)
            a = axes[0]
            base = np.floor(lattice).astype(int)
            upper = base.copy()
            upper[a] += 1
            va = grid.values[tuple(base)]
            vb = grid.values[tuple(upper)]
            t = frac[a]
            assert abs(va + t * (vb - va) - level) <= 1e-12

    def test_nonuniform_level_set(self):
        # vertices of the 0.25-level of the sphere field sit at radius 0.75
        grid = sphere_grid(48)
        mesh = marching_cubes(grid, 0.25)
        radii = np.linalg.norm(mesh.vertices, axis=1)
        assert np.abs(radii - 0.75).max() <= 1.5 * grid.spacing.max()


class TestTriMesh:
    def test_index_range_validated(self):
        with pytest.raises(ValueError):
            TriMesh(vertices=np.zeros((2, 3)), faces=np.array([[0, 1, 2]]))

    def test_degenerate_face_rejected(self):
        with pytest.raises(ValueError):
            TriMesh(vertices=np.zeros((3, 3)), faces=np.array([[0, 1, 1]]))


class TestObjExport:
    def test_single_triangle_layout(self, tmp_path):
        mesh = TriMesh(vertices=np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]),
                       faces=np.array([[0, 1, 2]]))
        path = tmp_path / "tri.obj"
        export_obj(mesh, path)
        lines = path.read_text().splitlines()
        assert len([l for l in lines if l.startswith("v ")]) == 3
        assert [l for l in lines if l.startswith("f ")] == ["f 1 2 3"]

    def test_empty_mesh_header_only(self, tmp_path):
        mesh = TriMesh(vertices=np.zeros((0, 3)), faces=np.zeros((0, 3), int))
        path = tmp_path / "empty.obj"
        export_obj(mesh, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("#")

    def test_sphere_roundtrip(self, tmp_path):
        mesh = marching_cubes(sphere_grid(16), 0.0)
        path = tmp_path / "sphere.obj"
        export_obj(mesh, path)
        back = load_obj(path)
        assert len(back.vertices) == len(mesh.vertices)
        assert np.array_equal(back.faces, mesh.faces)
        # 9 significant digits of printing precision
        assert np.abs(back.vertices - mesh.vertices).max() <= 1e-8
