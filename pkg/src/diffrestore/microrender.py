"""A small diffuse path tracer parameterized over primary sample space.

The scene is a target density on ``T^d`` with ``d = 2 + 2 * depth``:
``f(u)`` is the RGB contribution of the fixed-depth path built from ``u`` and
``p(u)`` its luminance.  Paths have no Russian roulette, so every ``u`` maps
to exactly one path and ``p`` is an ordinary function on the torus.
Seams of the concentric disk map make the score discontinuous in places;
``EPS`` keeps it finite.
"""

import math
from dataclasses import dataclass

import numpy as np

from .render_kernels import trace_batch
from .targets import KIND_SCENE, TargetDensity, _pack, luminance


@dataclass(frozen=True)
class Quad:
    """Parallelogram ``origin + a * edge1 + b * edge2`` with ``a, b`` in [0, 1]."""

    origin: tuple
    edge1: tuple
    edge2: tuple
    albedo: tuple = (0.0, 0.0, 0.0)
    emission: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    albedo: tuple = (0.0, 0.0, 0.0)
    emission: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Camera:
    position: tuple
    look_at: tuple
    up: tuple = (0.0, 1.0, 0.0)
    fov: float = 40.0  # vertical, degrees


def _check_material(albedo, emission, what):
    albedo = np.asarray(albedo, dtype=np.float64)
    emission = np.asarray(emission, dtype=np.float64)
    if albedo.shape != (3,) or emission.shape != (3,):
        raise ValueError(f"{what}: albedo and emission must be RGB triples")
    if np.any(albedo < 0) or np.any(albedo > 1):
        raise ValueError(f"{what}: albedo components must lie in [0, 1]")
    if np.any(emission < 0):
        raise ValueError(f"{what}: emission must be nonnegative")
    return albedo, emission


class Scene(TargetDensity):
    """Quads and spheres with diffuse albedo and/or emission, seen by a pinhole."""

    kind = KIND_SCENE

    def __init__(self, quads, spheres, camera, width=32, height=32, depth=2):
        if depth < 0:
            raise ValueError("depth must be >= 0")
        super().__init__(2 + 2 * depth, width, height)
        self.depth = int(depth)
        self.quads = tuple(quads)
        self.spheres = tuple(spheres)
        self.camera = camera
        rows = []
        for i, q in enumerate(self.quads):
            a, e = _check_material(q.albedo, q.emission, f"quad {i}")
            e1, e2 = np.asarray(q.edge1, float), np.asarray(q.edge2, float)
            if np.linalg.norm(np.cross(e1, e2)) == 0:
                raise ValueError(f"quad {i}: edges are parallel")
            rows.append(np.concatenate([q.origin, e1, e2, a, e]))
        self._quads = np.array(rows, dtype=np.float64).reshape(-1, 15)
        rows = []
        for i, s in enumerate(self.spheres):
            a, e = _check_material(s.albedo, s.emission, f"sphere {i}")
            if s.radius <= 0:
                raise ValueError(f"sphere {i}: radius must be positive")
            rows.append(np.concatenate([s.center, [s.radius], a, e]))
        self._spheres = np.array(rows, dtype=np.float64).reshape(-1, 10)
        self._cam = _camera_array(camera, width / height)
        self._ip = np.array([self.width, self.height, self.depth], dtype=np.int64)

    def _eval(self, X):
        rgb = trace_batch(self._quads, self._spheres, self._cam, self._ip, X)
        return rgb, luminance(rgb)

    def pack(self):
        return _pack(KIND_SCENE, np.zeros(1), self, self._quads, self._spheres, self._cam, self.depth)

    def max_emission(self):
        em = [self._quads[:, 12:15].max(initial=0.0), self._spheres[:, 7:10].max(initial=0.0)]
        return float(max(em))

    def max_albedo(self):
        al = [self._quads[:, 9:12].max(initial=0.0), self._spheres[:, 4:7].max(initial=0.0)]
        return float(max(al))

    def contribution_bound(self):
        """``sum_{k <= depth} a_max^k E_max``: no path can exceed this per channel."""
        a = self.max_albedo()
        return self.max_emission() * sum(a ** k for k in range(self.depth + 1))


def _camera_array(cam, aspect):
    pos = np.asarray(cam.position, dtype=np.float64)
    fwd = np.asarray(cam.look_at, dtype=np.float64) - pos
    fwd /= np.linalg.norm(fwd)
    right = np.cross(np.asarray(cam.up, dtype=np.float64), fwd)
    right /= np.linalg.norm(right)
    up = np.cross(fwd, right)
    half = math.tan(math.radians(cam.fov) / 2.0)
    return np.concatenate([pos, fwd, right * half * aspect, up * half])


def trace(scene, u):
    """Evaluate the path ``u`` (shape ``(d,)`` or ``(n, d)``)."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != scene.dim:
        raise ValueError(f"scene expects {scene.dim} coordinates, got {u.shape[-1]}")
    return scene.evaluate(u)


def render_reference(scene, spp, threads=1, seed=0, backend=None):
    """Pixel-stratified independent sampling: the per-pixel mean of ``f``."""
    from .restore import run_path_tracing

    if spp < 1:
        raise ValueError("spp must be >= 1")
    image, _ = run_path_tracing(scene, spp * scene.pixel_count, threads=threads, seed=seed,
                                backend=backend)
    return image


# ------------------------------------------------------------------ presets

WHITE = (0.75, 0.75, 0.75)
RED = (0.63, 0.065, 0.05)
GREEN = (0.14, 0.45, 0.09)


def cornell_box(width=32, height=32, depth=2, emission=(16.0, 13.0, 9.0)):
    """Open-front unit box, red left / green right wall, small ceiling light, two spheres."""
    quads = [
        Quad((0, 0, 0), (1, 0, 0), (0, 0, 1), WHITE),  # floor
        Quad((0, 1, 0), (1, 0, 0), (0, 0, 1), WHITE),  # ceiling
        Quad((0, 0, 1), (1, 0, 0), (0, 1, 0), WHITE),  # back
        Quad((0, 0, 0), (0, 1, 0), (0, 0, 1), RED),  # left
        Quad((1, 0, 0), (0, 1, 0), (0, 0, 1), GREEN),  # right
        Quad((0.4, 0.999, 0.4), (0.2, 0, 0), (0, 0, 0.2), (0, 0, 0), emission),
    ]
    spheres = [
        Sphere((0.3, 0.2, 0.62), 0.2, WHITE),
        Sphere((0.72, 0.15, 0.3), 0.15, WHITE),
    ]
    camera = Camera((0.5, 0.5, -1.4), (0.5, 0.5, 0.5), (0, 1, 0), 40.0)
    return Scene(quads, spheres, camera, width, height, depth)


def furnace_box(albedo=0.5, emission=1.0, width=32, height=32, depth=2):
    """Closed box, every wall with the same albedo and emission; camera inside."""
    a = (albedo,) * 3
    e = (emission,) * 3
    quads = [
        Quad((0, 0, 0), (1, 0, 0), (0, 0, 1), a, e),
        Quad((0, 1, 0), (1, 0, 0), (0, 0, 1), a, e),
        Quad((0, 0, 0), (1, 0, 0), (0, 1, 0), a, e),
        Quad((0, 0, 1), (1, 0, 0), (0, 1, 0), a, e),
        Quad((0, 0, 0), (0, 1, 0), (0, 0, 1), a, e),
        Quad((1, 0, 0), (0, 1, 0), (0, 0, 1), a, e),
    ]
    camera = Camera((0.5, 0.5, 0.5), (0.5, 0.5, 1.0), (0, 1, 0), 60.0)
    return Scene(quads, [], camera, width, height, depth)


def furnace_value(albedo, emission, depth):
    """Depth-truncated closed-box radiance ``sum_{k <= D} a^k E``."""
    return emission * sum(albedo ** k for k in range(depth + 1))


def emitter_wall(emission=(1.0, 2.0, 3.0), width=32, height=32, depth=1):
    """A huge black emitter filling the view."""
    quads = [Quad((-50, -50, 1), (100, 0, 0), (0, 100, 0), (0, 0, 0), tuple(emission))]
    camera = Camera((0, 0, 0), (0, 0, 1), (0, 1, 0), 40.0)
    return Scene(quads, [], camera, width, height, depth)


def empty_scene(width=32, height=32, depth=1):
    quads = [Quad((-1, -1, 2), (2, 0, 0), (0, 2, 0), (0.5, 0.5, 0.5))]
    camera = Camera((0, 0, 0), (0, 0, 1), (0, 1, 0), 40.0)
    return Scene(quads, [], camera, width, height, depth)


PRESETS = {
    "cornell": cornell_box,
    "furnace": furnace_box,
    "emitter": emitter_wall,
    "black": empty_scene,
}
