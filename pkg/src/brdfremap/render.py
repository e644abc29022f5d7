"""Deterministic direct-lighting renderer of the comparison scene.

The scene is a sphere of radius 2 at the origin lit by a single point
light, viewed by a pinhole camera.  One primary ray per pixel, analytic
ray-sphere intersection, no anti-aliasing and no secondary bounces: every
pixel is a pure function of the configuration, so renders are bit-identical
across runs and any parallelization strategy.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import brdf
from .brdf import BrdfSpec, Term
from .errors import (ConfigurationError, DegenerateMatchError,
                     DimensionMismatchError, DomainError)

# Radiant intensity that puts peak diffuse radiance at ~0.8 for albedo 1
# with the default camera/light distance 8 and sphere radius 2 (light to
# front pole distance 6): 0.8 * pi * 6^2.
DEFAULT_INTENSITY = 0.8 * math.pi * 36.0


class RenderPass(enum.Enum):
    FULL = "full"
    DIFFUSE_ONLY = "diffuse"
    SPECULAR_ONLY = "specular"


_PASS_TO_TERM = {
    RenderPass.DIFFUSE_ONLY: Term.DIFFUSE,
    RenderPass.SPECULAR_ONLY: Term.SPECULAR,
    RenderPass.FULL: None,
}


class LightMode(enum.Enum):
    HEADLIGHT = "headlight"
    OBLIQUE = "oblique"


@dataclass(frozen=True)
class LightConfig:
    """Point light on (or rotated away from) the viewing axis.

    The light sits at ``distance`` from the look-at point, along the camera
    axis (headlight) or rotated by ``theta_deg`` within the plane spanned by
    the view axis and the camera's right vector (oblique).
    """

    mode: LightMode = LightMode.HEADLIGHT
    theta_deg: float = 0.0
    intensity: tuple = (DEFAULT_INTENSITY,) * 3
    distance: float = 8.0

    def __post_init__(self):
        if np.any(np.asarray(self.intensity, float) < 0.0):
            raise ConfigurationError(f"light intensity {self.intensity} must be >= 0")
        if self.mode == LightMode.OBLIQUE and not 0.0 < self.theta_deg < 90.0:
            raise ConfigurationError(
                f"oblique angle {self.theta_deg} must lie in (0, 90) degrees")
        if self.mode == LightMode.HEADLIGHT and self.theta_deg != 0.0:
            raise ConfigurationError("headlight mode does not take an angle")

    @classmethod
    def headlight(cls, intensity=(DEFAULT_INTENSITY,) * 3, distance=8.0):
        return cls(LightMode.HEADLIGHT, 0.0, tuple(intensity), distance)

    @classmethod
    def oblique(cls, theta_deg, intensity=(DEFAULT_INTENSITY,) * 3, distance=8.0):
        return cls(LightMode.OBLIQUE, float(theta_deg), tuple(intensity), distance)

    def scaled(self, s: float) -> "LightConfig":
        return replace(self, intensity=tuple(float(v) * s for v in self.intensity))


@dataclass(frozen=True)
class SceneConfig:
    sphere_radius: float = 2.0
    camera_position: tuple = (0.0, 0.0, 8.0)
    camera_look_at: tuple = (0.0, 0.0, 0.0)
    vertical_fov_deg: float = 32.0
    light: LightConfig = field(default_factory=LightConfig)
    image_size: tuple = (512, 512)

    def __post_init__(self):
        cam = np.asarray(self.camera_position, float)
        target = np.asarray(self.camera_look_at, float)
        dist = float(np.linalg.norm(cam - target))
        if dist <= self.sphere_radius:
            raise ConfigurationError("camera lies inside the sphere")
        if self.sphere_radius <= 0.0:
            raise ConfigurationError("sphere radius must be positive")
        w, h = self.image_size
        if w < 1 or h < 1:
            raise ConfigurationError(f"bad image size {self.image_size}")
        # sphere must subtend at least 60% of the vertical field of view
        half_subtend = math.asin(min(self.sphere_radius / dist, 1.0))
        if half_subtend < 0.6 * math.radians(self.vertical_fov_deg) / 2.0:
            raise ConfigurationError(
                "fov too wide: sphere subtends less than 60% of image height")

    def with_size(self, size: int) -> "SceneConfig":
        return replace(self, image_size=(size, size))

    def with_light(self, light: LightConfig) -> "SceneConfig":
        return replace(self, light=light)

    def camera_axes(self):
        cam = np.asarray(self.camera_position, float)
        target = np.asarray(self.camera_look_at, float)
        forward = target - cam
        forward = forward / np.linalg.norm(forward)
        up_hint = np.array([0.0, 1.0, 0.0])
        if abs(np.dot(forward, up_hint)) > 0.999:
            up_hint = np.array([1.0, 0.0, 0.0])
        right = np.cross(forward, up_hint)
        right = right / np.linalg.norm(right)
        up = np.cross(right, forward)
        return cam, forward, right, up

    def light_position(self) -> np.ndarray:
        cam, forward, right, _ = self.camera_axes()
        target = np.asarray(self.camera_look_at, float)
        axis = -forward  # from target toward the camera
        theta = math.radians(self.light.theta_deg)
        direction = math.cos(theta) * axis + math.sin(theta) * right
        return target + self.light.distance * direction


@dataclass
class RenderedImage:
    width: int
    height: int
    pixels: np.ndarray          # (height, width, 3) linear RGB
    render_pass: RenderPass

    def validate(self):
        if self.pixels.shape != (self.height, self.width, 3):
            raise DimensionMismatchError(
                f"pixel array {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3")
        if not np.all(np.isfinite(self.pixels)) or np.any(self.pixels < 0.0):
            raise ConfigurationError("image contains non-finite or negative values")
        return self

    @classmethod
    def from_array(cls, pixels: np.ndarray, render_pass=RenderPass.FULL):
        pixels = np.asarray(pixels, float)
        h, w = pixels.shape[:2]
        return cls(w, h, pixels, render_pass)


def _check_same_shape(a: RenderedImage, b: RenderedImage):
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatchError(
            f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}")


def primary_rays(scene: SceneConfig):
    """Ray origins/directions for every pixel center, row-major."""
    w, h = scene.image_size
    cam, forward, right, up = scene.camera_axes()
    tan_half = math.tan(math.radians(scene.vertical_fov_deg) / 2.0)
    xs = (np.arange(w) + 0.5) / w * 2.0 - 1.0
    ys = 1.0 - (np.arange(h) + 0.5) / h * 2.0
    px = xs[None, :, None] * (tan_half * w / h) * right
    py = ys[:, None, None] * tan_half * up
    d = forward + px + py
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    return cam, d


def intersect_sphere(origin: np.ndarray, directions: np.ndarray, radius: float):
    """Smallest positive hit distance per ray; NaN where the ray misses."""
    oc = origin
    b = np.sum(directions * oc, axis=-1)
    c = float(np.dot(oc, oc)) - radius * radius
    disc = b * b - c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t = -b - sq
    t2 = -b + sq
    t = np.where(t > 1e-9, t, t2)
    hit &= t > 1e-9
    return np.where(hit, t, np.nan), hit


def render(spec: BrdfSpec, scene: SceneConfig,
           render_pass: RenderPass = RenderPass.FULL) -> RenderedImage:
    """Render the sphere scene; background pixels are exactly zero."""
    w, h = scene.image_size
    origin, dirs = primary_rays(scene)
    t, hit = intersect_sphere(origin, dirs, scene.sphere_radius)

    pixels = np.zeros((h, w, 3))
    if np.any(hit):
        hd = dirs[hit]
        p = origin + t[hit][:, None] * hd
        n = p / scene.sphere_radius
        wo = -hd
        light_pos = scene.light_position()
        to_light = light_pos - p
        d2 = np.sum(to_light * to_light, axis=-1)
        wi = to_light / np.sqrt(d2)[:, None]
        cos_i = np.maximum(np.sum(wi * n, axis=-1), 0.0)
        intensity = np.asarray(scene.light.intensity, float)
        weight = intensity * (cos_i / d2)[:, None]

        def radiance(term):
            return brdf.evaluate(spec.model, spec.values, wi, wo, n, term) * weight

        if render_pass == RenderPass.FULL:
            # summed per-term so full == diffuse + specular bit-exactly
            pixels[hit] = radiance(Term.DIFFUSE) + radiance(Term.SPECULAR)
        else:
            pixels[hit] = radiance(_PASS_TO_TERM[render_pass])
    return RenderedImage(w, h, pixels, render_pass)


def render_components(spec: BrdfSpec, scene: SceneConfig):
    """(full, diffuse-only, specular-only) renders of one spec."""
    return (render(spec, scene, RenderPass.FULL),
            render(spec, scene, RenderPass.DIFFUSE_ONLY),
            render(spec, scene, RenderPass.SPECULAR_ONLY))


def irradiance_match(src_diffuse: RenderedImage, dst_diffuse: RenderedImage) -> float:
    """Least-squares scalar s minimizing ||src - s * dst||^2.

    Used to match light intensity units across renderers: the returned
    scale is applied multiplicatively to the target light intensity before
    remapping.  Both images must be diffuse-only passes.
    """
    _check_same_shape(src_diffuse, dst_diffuse)
    for img in (src_diffuse, dst_diffuse):
        if img.render_pass != RenderPass.DIFFUSE_ONLY:
            raise DomainError(
                f"irradiance match expects diffuse-only passes, got {img.render_pass}")
    denom = float(np.sum(dst_diffuse.pixels ** 2))
    if denom == 0.0:
        raise DegenerateMatchError("destination diffuse image has zero energy")
    return float(np.sum(src_diffuse.pixels * dst_diffuse.pixels) / denom)
