import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hapticsim.errors import ConfigError
from hapticsim.geometry import (Capsule, OrganModel, Scene, Slab, Sphere,
                                closest_surface_point, scene_nearest,
                                signed_distance)
from hapticsim.haptic_core import HapticMaterial

RIGID = HapticMaterial(stiffness_k=500.0)


def organ(organ_id, shape):
    return OrganModel(organ_id, organ_id, shape, RIGID)


# --- signed_distance -------------------------------------------------------

def test_sphere_distance_inside():
    s = Sphere(center=[0, 0, 0], radius=0.05)
    assert signed_distance(s, [0, 0.03, 0]) == pytest.approx(-0.02, abs=1e-12)


def test_sphere_distance_on_surface():
    s = Sphere(center=[0, 0, 0], radius=0.05)
    assert signed_distance(s, [0.05, 0, 0]) == pytest.approx(0.0, abs=1e-12)


def test_capsule_distance_outside():
    c = Capsule(a=[0, 0, 0], b=[0.1, 0, 0], radius=0.01)
    assert signed_distance(c, [0.05, 0.02, 0]) == pytest.approx(0.01, abs=1e-12)


def test_capsule_end_cap():
    c = Capsule(a=[0, 0, 0], b=[0.1, 0, 0], radius=0.01)
    # beyond the segment end the distance is to the cap sphere
    assert signed_distance(c, [0.13, 0, 0]) == pytest.approx(0.02, abs=1e-12)


def test_slab_distance():
    s = Slab(point=[0, 0, 0], normal=[0, 0, 1], thickness=0.02)
    assert signed_distance(s, [0, 0, 0.005]) == pytest.approx(-0.005, abs=1e-12)
    assert signed_distance(s, [5.0, -2.0, 0.03]) == pytest.approx(0.02, abs=1e-12)


# --- closest_surface_point -------------------------------------------------

def test_sphere_closest_point_radial():
    s = Sphere(center=[0, 0, 0], radius=0.05)
    point, normal = closest_surface_point(s, [0, 0.04, 0])
    np.testing.assert_allclose(point, [0, 0.05, 0], atol=1e-15)
    np.testing.assert_allclose(normal, [0, 1, 0], atol=1e-15)


def test_sphere_center_degenerate_fallback():
    """A query exactly at the center resolves to the fixed +z direction."""
    s = Sphere(center=[0, 0, 0], radius=0.05)
    point, normal = closest_surface_point(s, [0, 0, 0])
    np.testing.assert_allclose(point, [0, 0, 0.05], atol=1e-15)
    np.testing.assert_allclose(normal, [0, 0, 1], atol=1e-15)


def test_slab_closest_point_upper_face():
    s = Slab(point=[0, 0, 0], normal=[0, 0, 1], thickness=0.02)
    point, normal = closest_surface_point(s, [0, 0, 0.005])
    np.testing.assert_allclose(point, [0, 0, 0.01], atol=1e-15)
    np.testing.assert_allclose(normal, [0, 0, 1], atol=1e-15)


def test_slab_closest_point_lower_face():
    s = Slab(point=[0, 0, 0], normal=[0, 0, 1], thickness=0.02)
    point, normal = closest_surface_point(s, [0.3, 0, -0.004])
    np.testing.assert_allclose(point, [0.3, 0, -0.01], atol=1e-15)
    np.testing.assert_allclose(normal, [0, 0, -1], atol=1e-15)


def test_capsule_axis_degenerate_fallback():
    # on the axis of an x-aligned capsule: fallback pushes along +z
    c = Capsule(a=[0, 0, 0], b=[0.1, 0, 0], radius=0.01)
    point, normal = closest_surface_point(c, [0.05, 0, 0])
    np.testing.assert_allclose(normal, [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(point, [0.05, 0, 0.01], atol=1e-15)


def test_capsule_z_axis_degenerate_fallback():
    # axis parallel to z: fallback must pick a perpendicular direction (+x)
    c = Capsule(a=[0, 0, 0], b=[0, 0, 0.1], radius=0.01)
    point, normal = closest_surface_point(c, [0, 0, 0.05])
    np.testing.assert_allclose(normal, [1, 0, 0], atol=1e-15)


# --- scene queries ----------------------------------------------------------

def test_scene_nearest_picks_containing_sphere():
    scene = Scene((organ("a", Sphere(center=[0, 0, 0], radius=0.05)),
                   organ("b", Sphere(center=[0.3, 0, 0], radius=0.05))))
    hit = scene_nearest(scene, [0, 0.01, 0])
    assert hit is not None
    organ_id, d, _, _ = hit
    assert organ_id == "a"
    assert d < 0


def test_scene_nearest_empty():
    assert scene_nearest(Scene(()), [0, 0, 0]) is None


def test_scene_nearest_tie_breaks_lexicographically():
    scene = Scene((organ("b", Sphere(center=[0.2, 0, 0], radius=0.05)),
                   organ("a", Sphere(center=[-0.2, 0, 0], radius=0.05))))
    organ_id, _, _, _ = scene_nearest(scene, [0, 0, 0])
    assert organ_id == "a"


def test_scene_rejects_duplicate_ids():
    with pytest.raises(ConfigError):
        Scene((organ("a", Sphere(center=[0, 0, 0], radius=0.05)),
               organ("a", Sphere(center=[1, 0, 0], radius=0.05))))


# --- validation -------------------------------------------------------------

@pytest.mark.parametrize("bad", [0.0, -0.01])
def test_sphere_radius_must_be_positive(bad):
    with pytest.raises(ConfigError):
        Sphere(center=[0, 0, 0], radius=bad)


def test_slab_normal_normalized_on_construction():
    s = Slab(point=[0, 0, 0], normal=[0, 0, 2], thickness=0.02)
    np.testing.assert_allclose(s.normal, [0, 0, 1])


def test_slab_zero_normal_rejected():
    with pytest.raises(ConfigError):
        Slab(point=[0, 0, 0], normal=[0, 0, 0], thickness=0.02)


# --- analytic properties ----------------------------------------------------

finite_coord = st.floats(-0.3, 0.3, allow_nan=False, allow_infinity=False)
point3 = st.tuples(finite_coord, finite_coord, finite_coord)


def _shapes() -> list:
    return [
        Sphere(center=[0.01, -0.02, 0.03], radius=0.05),
        Capsule(a=[-0.05, 0.0, 0.01], b=[0.06, 0.02, 0.03], radius=0.02),
        Slab(point=[0, 0, 0.1], normal=[0.0, 0.6, 0.8], thickness=0.04),
    ]


def _fd_gradient(shape, p, h=1e-6):
    g = np.zeros(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        g[i] = (signed_distance(shape, p + e) - signed_distance(shape, p - e)) / (2 * h)
    return g


@pytest.mark.parametrize("shape", _shapes(), ids=lambda s: type(s).__name__)
@given(p=point3)
@settings(max_examples=60, deadline=None)
def test_gradient_matches_reported_normal(shape, p):
    """Central differences of the distance field reproduce the outward
    normal away from degenerate loci."""
    p = np.array(p)
    if abs(signed_distance(shape, p)) < 1e-4:
        return  # FD straddles the surface crease for slabs
    if isinstance(shape, Sphere) and np.linalg.norm(p - shape.center) < 1e-3:
        return
    if isinstance(shape, Capsule):
        from hapticsim.geometry import _segment_closest
        if np.linalg.norm(p - _segment_closest(shape, p)) < 1e-3:
            return
    if isinstance(shape, Slab):
        if abs(float(np.dot(p - shape.point, shape.normal))) < 1e-3:
            return  # midplane crease
    _, normal = closest_surface_point(shape, p)
    grad = _fd_gradient(shape, p)
    assert np.linalg.norm(grad) == pytest.approx(1.0, abs=1e-4)
    # the distance gradient points along the outward normal on both sides
    # of the surface
    np.testing.assert_allclose(grad, normal, atol=1e-4)


@pytest.mark.parametrize("shape", _shapes(), ids=lambda s: type(s).__name__)
@given(p=point3)
@settings(max_examples=60, deadline=None)
def test_closest_point_idempotent(shape, p):
    p = np.array(p)
    point, _ = closest_surface_point(shape, p)
    again, _ = closest_surface_point(shape, point)
    assert np.linalg.norm(again - point) <= 1e-9
    assert abs(signed_distance(shape, point)) <= 1e-9
