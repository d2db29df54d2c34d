import numpy as np
import pytest

from diffrestore.microrender import (PRESETS, Camera, Quad, Scene, Sphere, cornell_box, empty_scene,
                                     emitter_wall, furnace_box, furnace_value, render_reference, trace)
from diffrestore.targets import luminance


def test_dimension_follows_depth():
    assert cornell_box(depth=2).dim == 6
    assert cornell_box(depth=3).dim == 8
    assert emitter_wall().dim == 4


def test_trace_shapes_and_luminance():
    scene = cornell_box(8, 8)
    u = np.random.default_rng(0).random((20, 6))
    ev = trace(scene, u)
    assert ev.f.shape == (20, 3) and ev.p.shape == (20,) and ev.pixel.shape == (20,)
    np.testing.assert_allclose(ev.p, luminance(ev.f))
    assert np.all(ev.f >= 0) and np.all(ev.f <= scene.contribution_bound())
    with pytest.raises(ValueError):
        trace(scene, u[:, :4])


def test_emitter_wall_is_exact():
    img = render_reference(emitter_wall(emission=(1.0, 2.0, 3.0), width=8, height=8), spp=2)
    np.testing.assert_allclose(img.reshape(-1, 3), np.tile([1.0, 2.0, 3.0], (64, 1)))


def test_black_scene_is_zero():
    assert not render_reference(empty_scene(8, 8), spp=2).any()


@pytest.mark.parametrize("albedo,depth", [(0.5, 1), (0.5, 2), (0.8, 3)])
def test_furnace_closed_form(albedo, depth):
    img = render_reference(furnace_box(albedo, 1.0, 8, 8, depth), spp=4)
    np.testing.assert_allclose(img, furnace_value(albedo, 1.0, depth), rtol=1e-12)


def test_floor_under_infinite_sky():
    """Every cosine-sampled bounce from the floor hits the emitting ceiling: f = a * E exactly."""
    quads = [Quad((-1e4, 0, -1e4), (2e4, 0, 0), (0, 0, 2e4), albedo=(0.6, 0.6, 0.6)),
             Quad((-1e4, 1, -1e4), (2e4, 0, 0), (0, 0, 2e4), emission=(2.0, 2.0, 2.0))]
    cam = Camera((0, 0.5, 0), (0, 0, 1.0), (0, 0, -1), fov=30.0)
    img = render_reference(Scene(quads, [], cam, 8, 8, depth=1), spp=4)
    np.testing.assert_allclose(img, 1.2, rtol=1e-12)


def test_cornell_has_color_bleeding():
    img = render_reference(cornell_box(16, 16), spp=64, seed=1)
    left, right = img[:, :3].mean(axis=(0, 1)), img[:, -3:].mean(axis=(0, 1))
    assert left[0] > left[1]  # red wall on the left
    assert right[1] > right[0]  # green wall on the right


@pytest.mark.parametrize("bad", [
    dict(albedo=(1.5, 0, 0)), dict(emission=(-1, 0, 0)), dict(albedo=(0.5, 0.5)),
])
def test_material_validation(bad):
    with pytest.raises(ValueError):
        Scene([Quad((0, 0, 1), (1, 0, 0), (0, 1, 0), **bad)], [], Camera((0, 0, 0), (0, 0, 1)))


def test_geometry_validation():
    cam = Camera((0, 0, 0), (0, 0, 1))
    with pytest.raises(ValueError):
        Scene([Quad((0, 0, 1), (1, 0, 0), (2, 0, 0))], [], cam)
    with pytest.raises(ValueError):
        Scene([], [Sphere((0, 0, 2), 0.0)], cam)
    with pytest.raises(ValueError):
        Scene([], [], cam, depth=-1)


def test_presets_build():
    for name, make in PRESETS.items():
        assert make(width=4, height=4).pixel_count == 16, name
