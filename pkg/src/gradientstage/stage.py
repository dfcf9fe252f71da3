"""Synthetic light stage: LED constellations, gradient intensities, ILTs,
and analytic/discretized Lambertian and mirror-specular renderers."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import Condition, GradientImageSet, Image, NormalMap, unit

_ICO_SUBDIV_COUNTS = {0: 12, 1: 42, 2: 162, 3: 642}


def _icosahedron():
    p = (1.0 + np.sqrt(5.0)) / 2.0
    verts = []
    for a in (-1.0, 1.0):
        for b in (-p, p):
            verts += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    v = np.asarray(verts)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    d2 = ((v[:, None, :] - v[None, :, :]) ** 2).sum(-1)
    edge_len = d2[d2 > 1e-9].min()
    is_edge = np.isclose(d2, edge_len)
    faces = []
    n = len(v)
    for i in range(n):
        for j in range(i + 1, n):
            if not is_edge[i, j]:
                continue
            for k in range(j + 1, n):
                if is_edge[i, k] and is_edge[j, k]:
                    faces.append((i, j, k))
    return v, faces


def _subdivide(verts, faces):
    verts = [tuple(v) for v in verts]
    index = {}

    def key(v):
        return tuple(np.round(v, 12))

    for i, v in enumerate(verts):
        index[key(np.asarray(v))] = i

    def midpoint(a, b):
        m = np.asarray(verts[a]) + np.asarray(verts[b])
        m /= np.linalg.norm(m)
        k = key(m)
        if k not in index:
            index[k] = len(verts)
            verts.append(tuple(m))
        return index[k]

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return np.asarray(verts), out


def generate_icosphere_directions(subdivisions: int) -> np.ndarray:
    """Unit vertex directions of an icosahedron subdivided 0..3 times.

    Counts: 12, 42, 162, 642.
    """
    if subdivisions not in _ICO_SUBDIV_COUNTS:
        raise ValueError(f"unsupported subdivision count: {subdivisions}")
    v, f = _icosahedron()
    for _ in range(subdivisions):
        v, f = _subdivide(v, f)
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    assert len(v) == _ICO_SUBDIV_COUNTS[subdivisions]
    return v


def select_hemisphere(directions: np.ndarray, axis, count: int) -> np.ndarray:
    """The `count` directions with the largest dot product against `axis`.

    Ties broken by input order. Models a front-facing partial stage.
    """
    directions = np.asarray(directions, dtype=float)
    ax = unit(axis)
    dots = directions @ ax
    if count > int(np.sum(dots > 0)):
        raise ValueError(
            f"count {count} exceeds the {int(np.sum(dots > 0))} "
            "directions on the positive side of the axis"
        )
    order = np.argsort(-dots, kind="stable")
    return directions[np.sort(order[:count])]


@dataclass(frozen=True)
class LedRecord:
    id: int
    direction: np.ndarray
    intensity: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError("LED intensity must lie in [0, 1]")
        object.__setattr__(self, "direction", unit(self.direction))


@dataclass(frozen=True)
class LightStage:
    leds: tuple[LedRecord, ...]
    stage_radius: float = 790.0
    quantization_levels: int = 4096

    def __post_init__(self):
        leds = tuple(self.leds)
        if not leds:
            raise ValueError("stage needs at least one LED")
        if self.quantization_levels < 2:
            raise ValueError("need at least 2 quantization levels")
        object.__setattr__(self, "leds", leds)

    @classmethod
    def from_directions(cls, directions, stage_radius=790.0, quantization_levels=4096):
        leds = tuple(
            LedRecord(i, d) for i, d in enumerate(np.asarray(directions, dtype=float))
        )
        return cls(leds, stage_radius, quantization_levels)

    @property
    def directions(self) -> np.ndarray:
        return np.stack([led.direction for led in self.leds])

    def to_json(self) -> str:
        recs = [
            {"id": led.id, "x": led.direction[0], "y": led.direction[1], "z": led.direction[2]}
            for led in self.leds
        ]
        return json.dumps(recs, indent=1)

    @classmethod
    def from_json(cls, text: str, stage_radius=790.0, quantization_levels=4096):
        recs = json.loads(text)
        leds = tuple(LedRecord(r["id"], (r["x"], r["y"], r["z"])) for r in recs)
        return cls(leds, stage_radius, quantization_levels)


def gradient_intensity(direction, condition) -> float:
    """Normalized LED intensity in [0,1] for one illumination condition.

    Gradients rescale the signed coordinate, (g+1)/2; complements flip the
    axis first; the constant condition drives every LED at full power.
    """
    condition = Condition(condition)
    if condition is Condition.C:
        return 1.0
    d = unit(direction)
    g = d[condition.axis]
    if condition.is_complement:
        g = -g
    return float((g + 1.0) / 2.0)


def build_ilt(stage: LightStage, condition) -> list[tuple[int, int]]:
    """Per-LED quantized brightness levels for one condition (round half up)."""
    levels = stage.quantization_levels
    out = []
    for led in stage.leds:
        p = gradient_intensity(led.direction, condition)
        level = int(np.floor(p * (levels - 1) + 0.5))
        out.append((led.id, level))
    return out


def write_ilt_csv(path, ilt: list[tuple[int, int]]) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write("id,level\n")
        for led_id, level in ilt:
            f.write(f"{led_id},{level}\n")


@dataclass(frozen=True)
class SceneSpec:
    """Ground truth for the Lambertian renderers.

    distortion packs the per-pixel 6-vector (dx, dy, dz, dxbar, dybar,
    dzbar) of symmetric and asymmetric lobe-deformation coefficients.
    """

    true_normals: NormalMap
    albedo: np.ndarray
    occlusion: np.ndarray
    distortion: np.ndarray

    def __post_init__(self):
        shape = self.true_normals.shape
        albedo = np.broadcast_to(np.asarray(self.albedo, dtype=float), shape).copy()
        occl = np.broadcast_to(np.asarray(self.occlusion, dtype=float), shape).copy()
        dist = np.broadcast_to(
            np.asarray(self.distortion, dtype=float), shape + (6,)
        ).copy()
        m = self.true_normals.mask
        if np.any((albedo[m] < 0) | (albedo[m] > 1)):
            raise ValueError("albedo must lie in [0, 1]")
        if np.any((occl[m] < 0) | (occl[m] > 1)):
            raise ValueError("occlusion term must lie in [0, 1]")
        object.__setattr__(self, "albedo", albedo)
        object.__setattr__(self, "occlusion", occl)
        object.__setattr__(self, "distortion", dist)

    @classmethod
    def ideal(cls, normals: NormalMap, albedo=1.0) -> "SceneSpec":
        return cls(normals, albedo, 1.0, np.zeros(6))


@dataclass(frozen=True)
class SpecularSceneSpec:
    """Mirror-lobe scene: per-pixel unit reflection vectors and lobe scale."""

    reflection_vectors: NormalMap
    lobe_strength: np.ndarray

    def __post_init__(self):
        s = np.broadcast_to(
            np.asarray(self.lobe_strength, dtype=float), self.reflection_vectors.shape
        ).copy()
        object.__setattr__(self, "lobe_strength", s)


_DIST_INDEX = {Condition.X: 0, Condition.Y: 1, Condition.Z: 2}


def render_lambert_analytic(scene: SceneSpec, condition) -> Image:
    """Closed-form radiance under continuous spherical illumination.

    gradient a:    (pi rho V / 2) (d_a + n_a/3 + 1/2)
    complement a:  (pi rho V / 2) (d_a + d_abar - n_a/3 + 1/2)
    constant:      (pi rho V / 2)
    """
    condition = Condition(condition)
    k = np.pi * scene.albedo * scene.occlusion / 2.0
    mask = scene.true_normals.mask
    if condition is Condition.C:
        return Image(np.where(mask, k, 0.0), mask)
    axis = condition.axis
    n_a = scene.true_normals.normals[:, :, axis]
    d_a = scene.distortion[:, :, axis]
    if condition.is_complement:
        term = d_a + scene.distortion[:, :, axis + 3] - n_a / 3.0 + 0.5
    else:
        term = d_a + n_a / 3.0 + 0.5
    r = k * term
    return Image(np.where(mask & (r >= 0), r, 0.0), mask & (r >= 0))


def render_lambert_discrete(
    scene: SceneSpec,
    stage: LightStage,
    condition,
    quantize: bool = False,
    led_visible: np.ndarray | None = None,
    led_gain: np.ndarray | None = None,
) -> Image:
    """Equal-weight quadrature over the LED constellation.

    r = (4 pi / N) * sum_i P_i * (rho/2) * max(0, n . w_i); the rho/2
    factor is the Lambert response in the same radiometric scale as the
    analytic renderer, so the sum converges to it as N grows.

    led_visible: optional per-LED binary visibility, shape (N,) shared by
    all pixels or (H, W, N) per pixel. led_gain: optional per-LED
    multiplicative intensity error, shape (N,).
    """
    condition = Condition(condition)
    dirs = stage.directions
    n_led = len(dirs)
    p = np.array([gradient_intensity(d, condition) for d in dirs])
    if quantize:
        levels = stage.quantization_levels
        p = np.floor(p * (levels - 1) + 0.5) / (levels - 1)
    if led_gain is not None:
        p = p * np.asarray(led_gain, dtype=float)
    nm = scene.true_normals
    cos = np.einsum("hwc,nc->hwn", nm.normals, dirs)
    np.maximum(cos, 0.0, out=cos)
    if led_visible is not None:
        vis = np.asarray(led_visible)
        if vis.ndim == 1:
            cos = cos * vis[None, None, :]
        else:
            cos = cos * vis
    r = (4.0 * np.pi / n_led) * (scene.albedo / 2.0) * (cos @ p)
    mask = nm.mask & (r >= 0)
    return Image(np.where(mask, r, 0.0), mask)


def render_specular_analytic(scene: SpecularSceneSpec, condition) -> Image:
    """Delta-lobe mirror radiance: gradient (s/2)(u_a + 1), constant s."""
    condition = Condition(condition)
    s = scene.lobe_strength
    mask = scene.reflection_vectors.mask
    if condition is Condition.C:
        r = s
    else:
        u_a = scene.reflection_vectors.normals[:, :, condition.axis]
        if condition.is_complement:
            u_a = -u_a
        r = (s / 2.0) * (u_a + 1.0)
    return Image(np.where(mask, np.maximum(r, 0.0), 0.0), mask)


def render_set(
    scene: SceneSpec,
    conditions=None,
    stage: LightStage | None = None,
    **discrete_kwargs,
) -> GradientImageSet:
    """Render several conditions at once (analytic unless a stage is given)."""
    if conditions is None:
        conditions = list(Condition)
    imgs = {}
    for c in conditions:
        if stage is None:
            imgs[Condition(c)] = render_lambert_analytic(scene, c)
        else:
            imgs[Condition(c)] = render_lambert_discrete(scene, stage, c, **discrete_kwargs)
    return GradientImageSet(imgs)


def make_cylinder_scene(width: int, height: int, radius_px: float, albedo=1.0) -> SceneSpec:
    """Vertical cylinder with analytically exact normals (n_z >= 0)."""
    if radius_px <= 0 or 2 * radius_px > width:
        raise ValueError("cylinder radius must be positive and fit in the image")
    x = np.arange(width) - (width - 1) / 2.0
    nx = np.tile(x / radius_px, (height, 1))
    inside = np.abs(nx) <= 1.0
    nx = np.where(inside, nx, 0.0)
    nz = np.sqrt(np.maximum(1.0 - nx**2, 0.0))
    normals = np.stack([nx, np.zeros_like(nx), np.where(inside, nz, 1.0)], axis=2)
    nm = NormalMap(normals, np.ones_like(nx), inside)
    return SceneSpec(nm, albedo, 1.0, np.zeros(6))


def make_sphere_scene(width: int, height: int, radius_px: float, albedo=1.0) -> SceneSpec:
    """Orthographic sphere with analytically exact normals."""
    if radius_px <= 0 or 2 * radius_px > min(width, height):
        raise ValueError("sphere radius must be positive and fit in the image")
    y, x = np.mgrid[0:height, 0:width].astype(float)
    nx = (x - (width - 1) / 2.0) / radius_px
    ny = (y - (height - 1) / 2.0) / radius_px
    r2 = nx**2 + ny**2
    inside = r2 <= 1.0
    nz = np.sqrt(np.maximum(1.0 - r2, 0.0))
    normals = np.stack(
        [np.where(inside, nx, 0.0), np.where(inside, ny, 0.0), np.where(inside, nz, 1.0)],
        axis=2,
    )
    nm = NormalMap(normals, np.ones_like(nx), inside)
    return SceneSpec(nm, albedo, 1.0, np.zeros(6))
