import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsgrasp.scene import (
    BaseMode,
    ContactPatch,
    FingerCommand,
    GripperConfiguration,
    GripperGeometry,
    ObjectShape,
    PoseNoiseSpec,
    SceneError,
    closure_depth,
    finger_ray,
    perturb_pose,
    ray_hit,
    resolve_contacts,
    wrap_angle,
)


def inside(obj, p):
    """Point-in-shape by half-plane signs; independent of the clipping code."""
    p = np.asarray(p, dtype=float)
    if obj.kind == "circle":
        return np.hypot(*(p - obj.center)) <= obj.size[0]
    v = obj.vertices()
    for k in range(len(v)):
        a, b = v[k], v[(k + 1) % len(v)]
        if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) < 0.0:
            return False
    return True


def first_crossing(obj, origin, direction, reach=0.4, step=2e-4):
    """Brute-force march along the ray, then bisect the entering bracket."""
    ts = np.arange(0.0, reach, step)
    flags = [inside(obj, origin + t * direction) for t in ts]
    if not any(flags):
        return None
    k = flags.index(True)
    if k == 0:
        return 0.0
    lo, hi = ts[k - 1], ts[k]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if inside(obj, origin + mid * direction):
            hi = mid
        else:
            lo = mid
    return hi


shapes = st.one_of(
    st.builds(lambda r: ObjectShape("circle", (r,)), st.floats(0.01, 0.05)),
    st.builds(lambda s, th: ObjectShape("square", (s,), theta=th), st.floats(0.02, 0.08), st.floats(0, 2 * math.pi)),
    st.builds(lambda w, h, th: ObjectShape("rectangle", (w, h), theta=th),
              st.floats(0.02, 0.09), st.floats(0.02, 0.09), st.floats(0, 2 * math.pi)),
    st.builds(lambda s, th: ObjectShape("triangle", (s,), theta=th), st.floats(0.03, 0.09), st.floats(0, 2 * math.pi)),
)


class TestObjectShape:
    def test_rejects_unknown_kind(self):
        with pytest.raises(SceneError):
            ObjectShape("hexagon", (0.1,))

    @pytest.mark.parametrize("kind,size", [("circle", (0.0,)), ("square", (-1.0,)), ("rectangle", (0.1,)),
                                           ("circle", (float("nan"),))])
    def test_rejects_bad_sizes(self, kind, size):
        with pytest.raises(SceneError):
            ObjectShape(kind, size)

    def test_theta_is_normalized(self):
        assert ObjectShape("square", (0.04,), theta=-math.pi / 2).theta == pytest.approx(1.5 * math.pi)

    @pytest.mark.parametrize("obj,area", [
        (ObjectShape("square", (0.04,), theta=0.3), 0.04 ** 2),
        (ObjectShape("rectangle", (0.08, 0.04), theta=1.0), 0.08 * 0.04),
        (ObjectShape("triangle", (0.06,), theta=2.0), math.sqrt(3) / 4 * 0.06 ** 2),
    ])
    def test_polygon_area_and_orientation(self, obj, area):
        v = obj.vertices()
        x, y = v[:, 0], v[:, 1]
        shoelace = 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        assert shoelace == pytest.approx(area, rel=1e-12)

    def test_triangle_face_normals(self):
        v = ObjectShape("triangle", (0.06,)).body_vertices()
        angles = []
        for k in range(3):
            e = v[(k + 1) % 3] - v[k]
            angles.append(math.degrees(math.atan2(-e[0], e[1])) % 360)
        assert sorted(round(a, 9) for a in angles) == [0.0, 120.0, 240.0]

    def test_circle_has_no_vertices(self):
        with pytest.raises(SceneError):
            ObjectShape("circle", (0.03,)).vertices()


class TestConfiguration:
    def test_needs_three_fingers(self):
        with pytest.raises(SceneError):
            GripperConfiguration(BaseMode.CIRCULAR, 0.0, (FingerCommand(),) * 2)

    def test_needs_two_active(self):
        fingers = (FingerCommand(), FingerCommand(active=False), FingerCommand(active=False))
        with pytest.raises(SceneError):
            GripperConfiguration(BaseMode.CIRCULAR, 0.0, fingers)

    def test_release_and_grips(self):
        cfg = GripperConfiguration.nominal(BaseMode.LATERAL, grip=6.0)
        assert cfg.total_grip == pytest.approx(18.0)
        cfg = cfg.replace_finger(2, active=False, grip=0.0)
        assert list(cfg.active) == [0, 1]
        back = cfg.with_mode(BaseMode.CIRCULAR, 0.0)
        assert list(back.active) == [0, 1, 2]

    @pytest.mark.parametrize("mode", list(BaseMode))
    def test_rays_aim_at_the_grasp_center(self, mode):
        geo = GripperGeometry()
        cfg = GripperConfiguration.nominal(mode, rotation=0.4)
        for i in range(3):
            origin, d = finger_ray(cfg, i, geo)
            assert np.linalg.norm(d) == pytest.approx(1.0)
            # perpendicular distance from the origin line to the grasp center
            miss = abs(origin[0] * d[1] - origin[1] * d[0])
            expected = geo.parallel_offset if mode == BaseMode.PARALLEL and i < 2 else 0.0
            assert miss == pytest.approx(expected, abs=1e-12)

    def test_proximal_pivots_about_the_pivot_point(self):
        geo = GripperGeometry()
        cfg = GripperConfiguration.nominal(BaseMode.CIRCULAR)
        turned = cfg.replace_finger(0, proximal=0.2)
        o1, d1 = finger_ray(cfg, 0, geo)
        o2, d2 = finger_ray(turned, 0, geo)
        pivot = np.array([geo.pivot_radius, 0.0])
        for o, d in ((o1, d1), (o2, d2)):
            assert abs((pivot - o)[0] * d[1] - (pivot - o)[1] * d[0]) < 1e-12
        assert wrap_angle(math.atan2(d2[1], d2[0]) - math.atan2(d1[1], d1[0])) == pytest.approx(0.2)


class TestRayHit:
    @settings(max_examples=60, deadline=None)
    @given(obj=shapes, heading=st.floats(0, 2 * math.pi), aim=st.tuples(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3)))
    def test_matches_brute_force_crossing(self, obj, heading, aim):
        # aim somewhere inside the object's bounding scale from a point well outside
        scale = min(obj.size) / 2.0
        target = obj.center + scale * np.asarray(aim)
        origin = target + 0.2 * np.array([math.cos(heading), math.sin(heading)])
        direction = (target - origin) / np.linalg.norm(target - origin)
        hit = ray_hit(obj, origin, direction)
        oracle = first_crossing(obj, origin, direction)
        if hit is None:
            # only a miss or a tangential graze may go unreported
            assert oracle is None or not inside(obj, origin + (oracle + 1e-6) * direction)
        else:
            assert oracle is not None
            assert hit.distance == pytest.approx(oracle, abs=1e-9)
            assert np.linalg.norm(hit.normal) == pytest.approx(1.0)
            assert float(np.dot(hit.normal, direction)) > 0.0

    def test_miss(self):
        obj = ObjectShape("square", (0.04,))
        assert ray_hit(obj, (0.2, 0.1), (-1.0, 0.0)) is None

    def test_ray_pointing_away(self):
        obj = ObjectShape("circle", (0.03,))
        assert ray_hit(obj, (0.2, 0.0), (1.0, 0.0)) is None

    def test_face_hit_normal_and_extent(self):
        obj = ObjectShape("square", (0.04,))
        hit = ray_hit(obj, (0.2, 0.0), (-1.0, 0.0), pad_width=0.02)
        assert hit.point == pytest.approx([0.02, 0.0])
        assert hit.normal == pytest.approx([-1.0, 0.0])
        assert hit.extent == pytest.approx(0.02)
        assert not hit.corner

    def test_corner_hit_uses_bisector(self):
        obj = ObjectShape("square", (0.04,))
        d = -np.array([1.0, 1.0]) / math.sqrt(2)
        hit = ray_hit(obj, (0.2, 0.2), d)
        assert hit.corner
        assert hit.normal == pytest.approx(d)

    def test_circle_curvature(self):
        hit = ray_hit(ObjectShape("circle", (0.025,)), (0.2, 0.0), (-1.0, 0.0))
        assert hit.curvature == pytest.approx(40.0)
        assert hit.point == pytest.approx([0.025, 0.0])


class TestContacts:
    def test_centered_circle_in_circular_mode(self):
        obj = ObjectShape("circle", (0.03,))
        contacts = resolve_contacts(obj, GripperConfiguration.nominal(BaseMode.CIRCULAR, grip=6.0))
        assert [i for i, _ in contacts] == [0, 1, 2]
        for _, c in contacts:
            assert c.twist == pytest.approx(0.0, abs=1e-12)
            assert c.depth == pytest.approx(6.0 / 2000.0)
            assert np.linalg.norm(np.asarray(c.point)) == pytest.approx(0.03)

    def test_lateral_square_contacts(self):
        obj = ObjectShape("square", (0.04,))
        contacts = dict(resolve_contacts(obj, GripperConfiguration.nominal(BaseMode.LATERAL)))
        assert contacts[0].point == pytest.approx((0.0, 0.02))
        assert contacts[1].point == pytest.approx((0.0, -0.02))
        assert contacts[2].point == pytest.approx((-0.02, 0.0))

    def test_released_finger_reports_none(self):
        cfg = GripperConfiguration.nominal(BaseMode.LATERAL).replace_finger(2, active=False)
        contacts = dict(resolve_contacts(ObjectShape("square", (0.04,)), cfg))
        assert contacts[2] is None

    def test_depth_saturates(self):
        geo = GripperGeometry()
        assert closure_depth(1e6, geo.pad_width, geo) == geo.max_compression
        assert closure_depth(0.0, geo.pad_width, geo) == 0.0

    def test_partial_pad_presses_deeper(self):
        geo = GripperGeometry()
        assert closure_depth(4.0, geo.pad_width / 2, geo) == pytest.approx(2 * closure_depth(4.0, geo.pad_width, geo))

    @pytest.mark.parametrize("theta_deg", [-8.0, -3.0, 4.0, 9.0])
    def test_turning_against_the_twist_reduces_it(self, theta_deg):
        obj = ObjectShape("square", (0.04,), theta=math.radians(theta_deg))
        cfg = GripperConfiguration.nominal(BaseMode.LATERAL)
        c0 = dict(resolve_contacts(obj, cfg))[0]
        eta = math.radians(2.0)
        turned = cfg.replace_finger(0, proximal=-math.copysign(eta, c0.twist))
        c1 = dict(resolve_contacts(obj, turned))[0]
        assert abs(c1.twist) < abs(c0.twist)

    def test_twist_sign_convention(self):
        c = ContactPatch((0, 0), (1.0, 0.0), 0.001, 0.02, (math.cos(0.1), math.sin(0.1)))
        assert c.twist == pytest.approx(0.1)
        assert ContactPatch((0, 0), (1.0, 0.0), 0.0, 0.02, (1.0, 0.0)).in_contact is False


class TestPoseNoise:
    def test_zero_noise_is_identity(self, rng):
        obj = ObjectShape("square", (0.04,), x=0.01)
        assert perturb_pose(obj, PoseNoiseSpec(0.0, 0.0), rng) is obj

    def test_noise_statistics(self):
        # uniform disc of radius r: per-axis std r/2; uniform angle on [-a, a]: std a/sqrt(3)
        spec = PoseNoiseSpec(0.005, math.radians(10.0))
        rng = np.random.default_rng(7)
        obj = ObjectShape("circle", (0.03,), theta=math.pi)
        poses = [perturb_pose(obj, spec, rng) for _ in range(20000)]
        xs = np.array([p.x for p in poses])
        ys = np.array([p.y for p in poses])
        th = np.array([wrap_angle(p.theta - math.pi) for p in poses])
        assert np.hypot(xs, ys).max() <= 0.005 + 1e-15
        assert xs.std() == pytest.approx(0.0025, rel=0.03)
        assert ys.std() == pytest.approx(0.0025, rel=0.03)
        assert np.abs(th).max() <= math.radians(10.0) + 1e-12
        assert th.std() == pytest.approx(math.radians(10.0) / math.sqrt(3), rel=0.03)

    def test_deterministic_under_seed(self):
        spec = PoseNoiseSpec()
        obj = ObjectShape("square", (0.04,))
        a = perturb_pose(obj, spec, np.random.default_rng(3))
        b = perturb_pose(obj, spec, np.random.default_rng(3))
        assert a == b

    def test_rejects_negative(self):
        with pytest.raises(SceneError):
            PoseNoiseSpec(-0.001, 0.0)
