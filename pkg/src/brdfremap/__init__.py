"""Appearance-preserving translation between BRDF models.

Uniform materials are remapped by image-based nonlinear least squares
against renders of a reference sphere scene; a compact parametric transform
learned from sweeps of such remaps then converts entire SVBRDF texture maps
instantly.
"""

from .brdf import (BrdfModelId, BrdfSpec, FresnelSpec, ShadingGeometry, Term,
                   eval_brdf, eval_brdf_component, f0_from_ior, make_spec,
                   parse_spec_text)
from .leastsq import (OptimizationOutcome, OptimizationProblem, Termination,
                      minimize, sweep_eval)
from .metrics import DissimilarityReport, l2_distance, residual_vector, ssim
from .remap import (RemapResult, RemapScheme, ScanTable, StabilityFlags,
                    remap_uniform, round_trip, stability_scan)
from .render import (LightConfig, LightMode, RenderedImage, RenderPass,
                     SceneConfig, irradiance_match, render)
from .svbrdf import (SvbrdfMaps, load_material, preview_render, remap_maps,
                     save_material, tonemap_curve)
from .transform import (ChainedTransform, KernelRegressor, RemapDatabase,
                        TransformModel, apply_kernel, apply_transform,
                        build_database, chain, fit_kernel_baseline,
                        fit_transform)

__version__ = "0.1.0"
