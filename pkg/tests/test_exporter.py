import numpy as np
import pytest

from lumifield.exporter import (
    DegenerateLayout,
    EmptyMesh,
    ExportBundle,
    bake_textures,
    export_bundle,
    generate_texture_cameras,
    load_bundle,
    marching_cubes,
    read_obj,
    write_bundle,
    write_obj,
)
from lumifield.fields import RadianceField, SdfField, pretrain_sphere, save_fields
from lumifield.geometry import Camera, look_at, perspective, ray_from_pixel
from lumifield.scene_io import SynthSpec, synth_cameras
from lumifield.shapes import BoxSdf, SphereSdf


@pytest.fixture(scope="module")
def trained_sphere():
    sdf = SdfField(hidden=48, n_hidden=3, rng=40)
    pretrain_sphere(sdf, 0.5, steps=900, rng=41)
    rad = RadianceField(feature_dim=48, hidden=24, n_hidden=2, rng=42)
    return sdf, rad


class TestMarchingCubes:
    def test_sphere_vertex_radii(self):
        mesh = marching_cubes(SphereSdf(0.5), resolution=64, iso=0.0)
        r = np.linalg.norm(mesh.vertices, axis=1)
        assert np.all(np.abs(r - 0.5) <= 2 * (2.0 / 64))

    def test_iso_offset_moves_outward(self):
        m0 = marching_cubes(SphereSdf(0.5), resolution=64, iso=0.0)
        m1 = marching_cubes(SphereSdf(0.5), resolution=64, iso=0.01)
        r0 = np.linalg.norm(m0.vertices, axis=1).mean()
        r1 = np.linalg.norm(m1.vertices, axis=1).mean()
        assert r1 > r0

    def test_box_watertight_euler(self):
        mesh = marching_cubes(BoxSdf((0.4, 0.3, 0.35)), resolution=128, iso=0.0)
        assert mesh.is_watertight()
        assert mesh.euler_characteristic() == 2

    def test_normals_outward(self):
        mesh = marching_cubes(SphereSdf(0.5), resolution=48, iso=0.0)
        a, b, c = (mesh.vertices[mesh.triangles[:, k]] for k in range(3))
        geo = np.cross(b - a, c - a)
        grad = SphereSdf(0.5).gradient((a + b + c) / 3.0)
        assert (np.einsum("ij,ij->i", geo, grad) > 0).mean() >= 0.99

    def test_no_degenerate_triangles(self):
        mesh = marching_cubes(TorusLike(), resolution=48, iso=0.0)
        assert np.all(mesh.triangle_areas() > 1e-12)

    def test_empty_grid_raises(self):
        with pytest.raises(EmptyMesh):
            marching_cubes(SphereSdf(5.0), resolution=16, iso=0.0)  # all inside

    def test_small_resolution_rejected(self):
        with pytest.raises(ValueError):
            marching_cubes(SphereSdf(0.5), resolution=4)


class TorusLike:
    def f(self, x):
        from lumifield.shapes import TorusSdf
        return TorusSdf(0.35, 0.15).f(x)


def grid_cameras(nw=3, nh=2):
    spec = SynthSpec(layout="grid", grid_shape=(nw, nh), grid_span=(0.9, 0.5),
                     distance=2.0, elevation=0.3, width=32, height=32)
    return synth_cameras(spec)


class TestTextureCameras:
    def test_level1_identity(self):
        base = grid_cameras()
        out = generate_texture_cameras(base, level=1)
        assert len(out) == 6
        for a, b in zip(base, out):
            np.testing.assert_array_equal(a.view, b.view)

    def test_level2_count(self):
        out = generate_texture_cameras(grid_cameras(), level=2)
        assert len(out) == 15

    def test_level3_count(self):
        out = generate_texture_cameras(grid_cameras(), level=3)
        assert len(out) == 45

    def test_new_cameras_on_capture_sphere_aimed_at_target(self):
        out = generate_texture_cameras(grid_cameras(), level=2)
        for cam in out:
            c = cam.center
            assert np.linalg.norm(c) == pytest.approx(2.0, abs=1e-6)
            # optical axis passes through the origin
            d = cam.forward
            assert np.linalg.norm(np.cross(d, -c / np.linalg.norm(c))) < 1e-6

    def test_base_cameras_survive_subdivision(self):
        base = grid_cameras()
        out = generate_texture_cameras(base, level=2)
        centers = np.array([c.center for c in out])
        for cam in base:
            dist = np.linalg.norm(centers - cam.center, axis=1).min()
            assert dist < 1e-9

    def test_collinear_layout_rejected(self):
        proto = grid_cameras()[0]
        cams = []
        for t in (1.8, 2.0, 2.2):
            cams.append(Camera(view=look_at([t, 0, 0], [0, 0, 0]),
                               proj=proto.proj, width=32, height=32))
        with pytest.raises(DegenerateLayout):
            generate_texture_cameras(cams, level=2)


class TestBakeTextures:
    def test_depth_center_matches_bisection_oracle(self, trained_sphere):
        sdf, rad = trained_sphere
        cam = Camera(view=look_at([0, 0, 2.0], [0, 0, 0], up=(0, 1, 0)),
                     proj=perspective(35, 1.0, 0.05, 20), width=33, height=33)
        textures, depths = bake_textures(sdf, rad, [cam])
        ray = ray_from_pixel(cam, (0.0, 0.0))
        lo, hi = 1.0, 2.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if sdf.f(np.atleast_2d(ray.at(mid)))[0] > 0:
                lo = mid
            else:
                hi = mid
        t_oracle = 0.5 * (lo + hi)
        center = depths[0][16, 16]
        assert abs(center - t_oracle) < 1e-3

    def test_alpha_iou_vs_analytic_silhouette(self, trained_sphere):
        sdf, rad = trained_sphere
        cam = Camera(view=look_at([0, 0, 2.0], [0, 0, 0], up=(0, 1, 0)),
                     proj=perspective(35, 1.0, 0.05, 20), width=96, height=96)
        textures, _ = bake_textures(sdf, rad, [cam])
        alpha = textures[0][..., 3] > 0
        from lumifield.geometry import rays_for_image, intersect_sphere
        o, d = rays_for_image(cam)
        _, _, hit = intersect_sphere(o, d, 0.5)
        gt = hit.reshape(96, 96)
        iou = (alpha & gt).sum() / (alpha | gt).sum()
        assert iou > 0.98

    def test_depth_finite_inside_alpha(self, trained_sphere):
        sdf, rad = trained_sphere
        cam = grid_cameras()[0]
        textures, depths = bake_textures(sdf, rad, [cam])
        assert np.all(np.isfinite(depths[0][textures[0][..., 3] > 0]))
        assert np.all(np.isinf(depths[0][textures[0][..., 3] == 0]))


class TestBundleIO:
    def test_obj_round_trip_exact(self, tmp_path):
        mesh = marching_cubes(SphereSdf(0.5), resolution=24, iso=0.0)
        write_obj(tmp_path / "m.obj", mesh)
        back = read_obj(tmp_path / "m.obj")
        np.testing.assert_array_equal(back.triangles, mesh.triangles)
        np.testing.assert_allclose(back.vertices, mesh.vertices, atol=1e-7)
        np.testing.assert_allclose(back.normals, mesh.normals, atol=1e-7)

    def test_bundle_round_trip(self, trained_sphere, tmp_path):
        sdf, rad = trained_sphere
        cams = grid_cameras()[:2]
        bundle = export_bundle(sdf, rad, cams, tmp_path / "b", resolution=24)
        back = load_bundle(tmp_path / "b")
        np.testing.assert_array_equal(back.mesh.triangles, bundle.mesh.triangles)
        np.testing.assert_allclose(back.mesh.vertices, bundle.mesh.vertices, atol=1e-7)
        assert back.meta == bundle.meta
        assert len(back.textures) == 2
        for a, b in zip(back.cameras, bundle.cameras):
            np.testing.assert_array_equal(a.view, b.view)
        # alpha masks survive exactly; colors within 8-bit quantization
        for ta, tb in zip(back.textures, bundle.textures):
            np.testing.assert_array_equal(ta[..., 3] > 0, tb[..., 3] > 0)
            assert np.max(np.abs(ta[..., :3] - tb[..., :3])) < 0.01
        for da, db in zip(back.depths, bundle.depths):
            np.testing.assert_array_equal(da, db.astype(np.float32))

    def test_bundle_invariants(self):
        mesh = marching_cubes(SphereSdf(0.5), resolution=16, iso=0.0)
        cam = grid_cameras()[0]
        tex = np.zeros((4, 4, 4), dtype=np.float32)
        dep = np.full((4, 4), np.inf, dtype=np.float32)
        tex[1, 1, 3] = 1.0  # alpha without finite depth must fail
        with pytest.raises(ValueError, match="depth"):
            ExportBundle(mesh=mesh, textures=[tex], depths=[dep], cameras=[cam])
