"""geometry: 카메라, 광선, 좌표 변환, 경계 깊이, 정규화"""

import math

import numpy as np
import pytest
import torch

from hybridfield.errors import GeometryError, InvalidPixelError
from hybridfield.geometry import (
    CameraModel,
    PosedCamera,
    Region,
    SceneFrame,
    WarpedPoint,
    boundary_from_disparity,
    camera_directions,
    cartesian_from_spherical,
    generate_rays,
    normalize_scene,
    pixel_to_ray,
    project_directions,
    ray_sphere_intersection,
    spherical_coords,
    unwarp_point,
    warp_point,
    warp_points,
)


def make_camera(model=CameraModel.PINHOLE, center=(0.0, 0.0, 0.0), rotation=None, size=8, f=1.0):
    c2w = np.eye(4)
    if rotation is not None:
        c2w[:3, :3] = rotation
    c2w[:3, 3] = center
    return PosedCamera(model=model, width=size, height=size, fx=f, fy=f, cx=size / 2, cy=size / 2, c2w=c2w)


class TestCameraDirections:

    def test_pinhole_principal_point_looks_forward(self):
        cam = make_camera(size=4, f=2.0)
        d = camera_directions(cam, 2.0, 2.0)
        np.testing.assert_allclose(d, [0.0, 0.0, 1.0], atol=1e-15)

    def test_fisheye_quarter_turn(self):
        cam = make_camera(CameraModel.FISHEYE_EQUIDISTANT)
        d = camera_directions(cam, 4.0 + math.pi / 2, 4.0)
        np.testing.assert_allclose(d, [1.0, 0.0, 0.0], atol=1e-12)

    def test_fisheye_outside_image_circle(self):
        cam = make_camera(CameraModel.FISHEYE_EQUIDISTANT)
        with pytest.raises(InvalidPixelError):
            camera_directions(cam, 7.5, 4.0)

    def test_directions_follow_rotation(self):
        # 카메라 +z 를 월드 +x 로
        rotation = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
        cam = make_camera(rotation=rotation, size=4, f=2.0)
        np.testing.assert_allclose(camera_directions(cam, 2.0, 2.0), [1.0, 0.0, 0.0], atol=1e-15)

    @pytest.mark.parametrize("model", [CameraModel.PINHOLE, CameraModel.FISHEYE_EQUIDISTANT])
    def test_projection_inverts_directions(self, model):
        cam = make_camera(model)
        rng = np.random.default_rng(1)
        u = rng.uniform(2.5, 5.5, size=50)
        v = rng.uniform(2.5, 5.5, size=50)
        pu, pv = project_directions(cam, camera_directions(cam, u, v))
        np.testing.assert_allclose(pu, u, atol=1e-10)
        np.testing.assert_allclose(pv, v, atol=1e-10)

    def test_non_orthonormal_rotation_rejected(self):
        with pytest.raises(GeometryError):
            make_camera(rotation=np.diag([1.0, 1.0, 1.1]))

    def test_reflection_rejected(self):
        with pytest.raises(GeometryError):
            make_camera(rotation=np.diag([1.0, 1.0, -1.0]))


class TestSphereIntersection:

    def test_from_center(self):
        assert ray_sphere_intersection([0, 0, 0], [0, 0, 1], 5.0) == pytest.approx(5.0, abs=1e-12)

    def test_off_center(self):
        t = ray_sphere_intersection([0.3, 0, 0], [1, 0, 0], 5.0)
        assert t == pytest.approx(4.7, abs=1e-12)
        t = ray_sphere_intersection([0.3, 0, 0], [-1, 0, 0], 5.0)
        assert t == pytest.approx(5.3, abs=1e-12)

    def test_origin_outside(self):
        with pytest.raises(GeometryError):
            ray_sphere_intersection([6.0, 0, 0], [1, 0, 0], 5.0)

    def test_pixel_to_ray_depths(self, frame):
        cam = make_camera(size=4, f=2.0)
        ray = pixel_to_ray(cam, 2.0, 2.0, frame)
        assert ray.t_boundary == pytest.approx(5.0)
        assert ray.t_near < ray.t_boundary <= ray.t_far
        np.testing.assert_allclose(np.linalg.norm(ray.point(ray.t_boundary)), 5.0, atol=1e-12)

    def test_pixel_out_of_range(self, frame):
        cam = make_camera(size=4)
        with pytest.raises(InvalidPixelError):
            pixel_to_ray(cam, 4.5, 1.0, frame)

    def test_far_before_boundary(self, frame):
        cam = make_camera(size=4, f=2.0)
        with pytest.raises(GeometryError):
            pixel_to_ray(cam, 2.0, 2.0, frame, far=3.0)


class TestGenerateRays:

    def test_bundle_shape_and_ids(self, frame):
        cam = make_camera(CameraModel.FISHEYE_EQUIDISTANT, center=(0.1, 0.0, 0.0), f=2.5)
        rays = generate_rays(cam, frame, ray_id_offset=100)
        assert len(rays) == 64
        assert rays.ray_ids.tolist() == list(range(100, 164))
        norms = torch.linalg.norm(rays.directions, dim=-1)
        torch.testing.assert_close(norms, torch.ones(64, dtype=torch.float64))

    def test_boundary_depth_lands_on_sphere(self, frame):
        cam = make_camera(CameraModel.FISHEYE_EQUIDISTANT, center=(0.2, -0.1, 0.3), f=2.5)
        rays = generate_rays(cam, frame)
        points = rays.origins + rays.t_boundary[:, None] * rays.directions
        radii = torch.linalg.norm(points, dim=-1)
        torch.testing.assert_close(radii, torch.full_like(radii, 5.0), atol=1e-12, rtol=0)

    def test_camera_outside_boundary(self, frame):
        cam = make_camera(center=(6.0, 0.0, 0.0))
        with pytest.raises(GeometryError):
            generate_rays(cam, frame)


class TestWarp:

    def test_foreground_identity(self, frame):
        wp = warp_point([1.0, 2.0, 3.0], frame)
        assert wp.region == Region.FOREGROUND
        assert wp.coords == (1.0, 2.0, 3.0)

    def test_boundary_point_is_foreground(self, frame):
        assert warp_point([0.0, 0.0, 5.0], frame).region == Region.FOREGROUND

    def test_background_on_axis(self, frame):
        wp = warp_point([0.0, 0.0, 10.0], frame)
        assert wp.region == Region.BACKGROUND
        assert wp.coords == pytest.approx((0.0, 0.0, 0.5))

    def test_background_equator(self, frame):
        wp = warp_point([0.0, 20.0, 0.0], frame)
        assert wp.coords == pytest.approx((math.pi / 2, math.pi / 2, 0.25))

    def test_round_trip(self, frame):
        rng = np.random.default_rng(2)
        for p in rng.normal(size=(20, 3)) * 40:
            np.testing.assert_allclose(unwarp_point(warp_point(p, frame), frame), p, rtol=1e-12, atol=1e-12)

    def test_unwarp_foreground(self, frame):
        p = unwarp_point(WarpedPoint(Region.FOREGROUND, (0.5, 0.5, 0.5)), frame)
        np.testing.assert_allclose(p, [0.5, 0.5, 0.5])

    def test_batched_matches_pointwise(self, frame):
        rng = np.random.default_rng(3)
        points = rng.normal(size=(30, 3)) * 8
        fg, coords = warp_points(torch.tensor(points), frame.boundary_radius)
        for p, is_fg, c in zip(points, fg.tolist(), coords.numpy()):
            wp = warp_point(p, frame)
            assert is_fg == (wp.region == Region.FOREGROUND)
            np.testing.assert_allclose(c, wp.coords, atol=1e-12)

    def test_batched_inverse(self, frame):
        points = torch.tensor([[10.0, 3.0, -2.0], [0.0, -7.0, 9.0]], dtype=torch.float64)
        coords = spherical_coords(points, frame.boundary_radius)
        torch.testing.assert_close(cartesian_from_spherical(coords, frame.boundary_radius), points)


class TestBoundary:

    def test_disparity_formula(self):
        assert boundary_from_disparity(800.0, 0.5, 4.0) == pytest.approx(100.0)

    @pytest.mark.parametrize("f,b,d", [(800.0, 0.5, 0.0), (800.0, 0.5, -1.0), (0.0, 0.5, 1.0), (800.0, -0.5, 1.0)])
    def test_invalid_inputs(self, f, b, d):
        with pytest.raises(GeometryError):
            boundary_from_disparity(f, b, d)


class TestNormalizeScene:

    def test_centroid_moves_to_origin(self):
        cams = [make_camera(center=(1.0, 0.0, 0.0)), make_camera(center=(3.0, 0.0, 0.0))]
        normalized, frame = normalize_scene(cams)
        np.testing.assert_allclose(normalized[0].center, [-1.0, 0.0, 0.0])
        np.testing.assert_allclose(normalized[1].center, [1.0, 0.0, 0.0])
        np.testing.assert_allclose(frame.world_offset, [2.0, 0.0, 0.0])
        assert frame.rig_radius == pytest.approx(1.0)
        assert frame.boundary_radius == pytest.approx(10.0)

    def test_explicit_boundary(self):
        cams = [make_camera(center=(0.5, 0.0, 0.0)), make_camera(center=(-0.5, 0.0, 0.0))]
        _, frame = normalize_scene(cams, boundary_radius=2.0)
        assert frame.boundary_radius == 2.0

    def test_single_camera(self):
        with pytest.raises(GeometryError):
            normalize_scene([make_camera()])

    def test_coincident_cameras(self):
        with pytest.raises(GeometryError):
            normalize_scene([make_camera(), make_camera()])

    def test_frame_requires_boundary_beyond_rig(self):
        with pytest.raises(GeometryError):
            SceneFrame(np.zeros(3), rig_radius=1.0, boundary_radius=0.5)

    def test_frame_dict_round_trip(self, frame):
        restored = SceneFrame.from_dict(frame.to_dict())
        assert restored.to_dict() == frame.to_dict()
