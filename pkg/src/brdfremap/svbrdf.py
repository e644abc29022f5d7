"""Spatially-varying material maps and their instant remapping.

An SVBRDF is four aligned texture maps (diffuse RGB, specular RGB,
scalar roughness, tangent-space normals).  Remapping applies the learned
TransformModel per texel: pure array math, no rendering, no optimization,
so megatexel maps convert in well under a second.  Normals pass through
untouched.  Flat-plane preview renders provide the visual check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import brdf, imageio
from .brdf import BrdfModelId, BrdfSpec, ROUGHNESS_BOUNDS, Term
from .errors import ConfigurationError, DimensionMismatchError, DomainError
from .render import LightConfig, RenderedImage, RenderPass
from .transform import apply_any

_PASS_TO_TERM = {
    RenderPass.DIFFUSE_ONLY: Term.DIFFUSE,
    RenderPass.SPECULAR_ONLY: Term.SPECULAR,
    RenderPass.FULL: None,
}


@dataclass
class SvbrdfMaps:
    diffuse: np.ndarray      # (h, w, 3) linear
    specular: np.ndarray     # (h, w, 3) linear
    roughness: np.ndarray    # (h, w) in (0, 1]
    normals: np.ndarray      # (h, w, 3) decoded unit vectors

    @property
    def shape(self):
        return self.roughness.shape

    def validate(self) -> "SvbrdfMaps":
        h, w = self.roughness.shape
        for name, arr, want in (("diffuse", self.diffuse, (h, w, 3)),
                                ("specular", self.specular, (h, w, 3)),
                                ("normals", self.normals, (h, w, 3))):
            if arr.shape != want:
                raise DimensionMismatchError(
                    f"{name} map shape {arr.shape} != roughness-derived {want}")
        if np.any(self.roughness <= 0.0) or np.any(self.roughness > 1.0):
            raise DomainError("roughness texels must lie in (0, 1]")
        norms = np.linalg.norm(self.normals, axis=-1)
        if np.any(np.abs(norms - 1.0) > 0.02):
            raise DomainError("normals must decode to unit vectors within 2%")
        return self

    @classmethod
    def uniform(cls, size, diffuse, specular, roughness, normal=(0.0, 0.0, 1.0)):
        h, w = size
        return cls(np.broadcast_to(np.asarray(diffuse, float), (h, w, 3)).copy(),
                   np.broadcast_to(np.asarray(specular, float), (h, w, 3)).copy(),
                   np.full((h, w), float(roughness)),
                   np.broadcast_to(np.asarray(normal, float), (h, w, 3)).copy())


def remap_maps(maps: SvbrdfMaps, t, report: dict | None = None) -> SvbrdfMaps:
    """Per-texel transform application; normals are copied bit-identically.

    Out-of-gamut results are clamped to the target model's parameter
    bounds; pass ``report`` to receive the clamped-texel counts per map.
    """
    maps.validate()
    out = apply_any(t, {"diffuse_rgb": maps.diffuse,
                        "specular_rgb": maps.specular,
                        "roughness": maps.roughness})
    model = t.target_model
    mdef = brdf.model_def(model)
    clamped = {}
    arrays = {}
    for key, pname in (("diffuse", "diffuse_rgb"), ("specular", "specular_rgb"),
                       ("roughness", "roughness")):
        pd = mdef.param(pname)
        raw = np.asarray(out[pname], float)
        clipped = np.clip(raw, pd.lower, pd.upper)
        clamped[key] = int(np.count_nonzero(raw != clipped))
        arrays[key] = clipped
    if report is not None:
        report["clamped_texels"] = clamped
        report["total_texels"] = int(maps.roughness.size)
    return SvbrdfMaps(arrays["diffuse"], arrays["specular"],
                      arrays["roughness"], maps.normals.copy())


def tonemap_curve(t, samples: int = 256):
    """The roughness remapping as a sampled 1-D curve over (0, 1].

    Remapping a roughness map is exactly a per-value lookup of this curve;
    returns (inputs, outputs) arrays of length ``samples``.
    """
    lo, hi = ROUGHNESS_BOUNDS
    xs = np.linspace(lo, hi, samples)
    ys = np.asarray(apply_any(t, {"roughness": xs})["roughness"], float)
    mdef = brdf.model_def(t.target_model)
    pd = mdef.param("roughness")
    return xs, np.clip(ys, pd.lower, pd.upper)


# ---------------------------------------------------------------------------
# plane preview rendering

def _plane_geometry(shape, camera_distance: float, light: LightConfig):
    """Per-texel positions, view and light vectors for the unit-quad preview."""
    h, w = shape
    xs = ((np.arange(w) + 0.5) / w - 0.5)
    ys = (0.5 - (np.arange(h) + 0.5) / h)
    px, py = np.meshgrid(xs, ys)
    p = np.stack([px, py, np.zeros_like(px)], axis=-1)

    cam = np.array([0.0, 0.0, camera_distance])
    wo = cam - p
    wo /= np.linalg.norm(wo, axis=-1, keepdims=True)

    theta = math.radians(light.theta_deg)
    light_pos = light.distance * np.array([math.sin(theta), 0.0, math.cos(theta)])
    to_light = light_pos - p
    d2 = np.sum(to_light * to_light, axis=-1)
    wi = to_light / np.sqrt(d2)[..., None]
    return wo, wi, d2


def preview_render(maps: SvbrdfMaps, model: BrdfModelId, light: LightConfig,
                   render_pass: RenderPass = RenderPass.FULL,
                   camera_distance: float = 2.0) -> RenderedImage:
    """Shade a fronto-parallel unit quad with the per-texel parameters.

    One texel per pixel; the shading normal is the decoded normal map
    entry (renormalized), the frame being world-aligned for a flat quad.
    """
    maps.validate()
    wo, wi, d2 = _plane_geometry(maps.shape, camera_distance, light)
    n = maps.normals / np.linalg.norm(maps.normals, axis=-1, keepdims=True)
    params = {"diffuse_rgb": maps.diffuse, "specular_rgb": maps.specular,
              "roughness": maps.roughness}
    cos_i = np.maximum(np.sum(wi * n, axis=-1), 0.0)
    weight = np.asarray(light.intensity, float) * (cos_i / d2)[..., None]
    if render_pass == RenderPass.FULL:
        pixels = (brdf.evaluate(model, params, wi, wo, n, Term.DIFFUSE) * weight
                  + brdf.evaluate(model, params, wi, wo, n, Term.SPECULAR) * weight)
    else:
        pixels = brdf.evaluate(model, params, wi, wo, n,
                               _PASS_TO_TERM[render_pass]) * weight
    h, w = maps.shape
    return RenderedImage(w, h, pixels, render_pass)


def render_plane_uniform(spec: BrdfSpec, light: LightConfig, size,
                         render_pass: RenderPass = RenderPass.FULL,
                         camera_distance: float = 2.0) -> RenderedImage:
    """Uniform-material plane render (the single-spec reference path)."""
    h, w = size
    wo, wi, d2 = _plane_geometry((h, w), camera_distance, light)
    n = np.broadcast_to(np.array([0.0, 0.0, 1.0]), wi.shape)
    cos_i = np.maximum(np.sum(wi * n, axis=-1), 0.0)
    weight = np.asarray(light.intensity, float) * (cos_i / d2)[..., None]
    if render_pass == RenderPass.FULL:
        pixels = (brdf.evaluate(spec.model, spec.values, wi, wo, n, Term.DIFFUSE)
                  * weight
                  + brdf.evaluate(spec.model, spec.values, wi, wo, n,
                                  Term.SPECULAR) * weight)
    else:
        pixels = brdf.evaluate(spec.model, spec.values, wi, wo, n,
                               _PASS_TO_TERM[render_pass]) * weight
    return RenderedImage(w, h, pixels, render_pass)


# ---------------------------------------------------------------------------
# material folder I/O

MANIFEST_NAME = "material.json"

_DEFAULT_FILES = {
    "diffuse": ("diffuse.png", "srgb8"),
    "specular": ("specular.png", "srgb8"),
    "roughness": ("roughness.png", "linear16"),
    "normals": ("normals.png", "normal8"),
}


def save_material(directory, maps: SvbrdfMaps, model: BrdfModelId,
                  precise: bool = False) -> None:
    """Write the four maps plus a manifest naming the source model.

    ``precise`` stores every map as PFM (lossless) instead of PNG.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"model": model.value, "maps": {}}
    data = {"diffuse": maps.diffuse, "specular": maps.specular,
            "roughness": maps.roughness, "normals": maps.normals}
    for key, arr in data.items():
        if precise:
            fname, encoding = f"{key}.pfm", "pfm"
            imageio.write_pfm(directory / fname, np.asarray(arr, np.float32))
        else:
            fname, encoding = _DEFAULT_FILES[key]
            path = directory / fname
            if encoding == "srgb8":
                imageio.write_png_rgb8(path, arr, transfer="srgb")
            elif encoding == "linear16":
                imageio.write_png_gray16(path, arr)
            else:  # normal8: [-1, 1] packed into [0, 1]
                imageio.write_png_rgb8(path, 0.5 * (arr + 1.0), transfer="linear")
        manifest["maps"][key] = {"file": fname, "encoding": encoding}
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1))


def load_material(directory):
    """Load a material folder; returns (maps, model)."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise ConfigurationError(f"no {MANIFEST_NAME} in {directory}")
    manifest = json.loads(manifest_path.read_text())
    model = BrdfModelId.from_name(manifest["model"])
    loaded = {}
    for key, entry in manifest["maps"].items():
        path = directory / entry["file"]
        encoding = entry["encoding"]
        if encoding == "pfm":
            loaded[key] = np.asarray(imageio.read_pfm(path), float)
        elif encoding == "srgb8":
            loaded[key] = imageio.read_png_rgb(path, transfer="srgb")
        elif encoding == "linear8":
            loaded[key] = imageio.read_png_rgb(path, transfer="linear")
        elif encoding == "linear16":
            loaded[key] = imageio.read_png_gray(path)
        elif encoding == "normal8":
            loaded[key] = imageio.read_png_rgb(path, transfer="linear") * 2.0 - 1.0
        else:
            raise ConfigurationError(f"unknown encoding {encoding!r} for {key}")
    missing = {"diffuse", "specular", "roughness", "normals"} - set(loaded)
    if missing:
        raise ConfigurationError(f"manifest missing maps: {sorted(missing)}")
    rough = loaded["roughness"]
    lo, _ = ROUGHNESS_BOUNDS
    rough = np.clip(rough, lo, 1.0)  # quantization may touch the open bound
    normals = loaded["normals"]
    normals = normals / np.maximum(
        np.linalg.norm(normals, axis=-1, keepdims=True), 1e-9)
    maps = SvbrdfMaps(loaded["diffuse"], loaded["specular"], rough, normals)
    return maps.validate(), model
