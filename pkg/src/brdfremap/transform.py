"""Compact parametric transforms between two models' parameter spaces.

A database of uniform remaps (parameter sweep -> fitted counterparts)
is distilled into three small pieces:

- a low-degree polynomial alpha2 = P(alpha1) for roughness, which depends
  on roughness alone;
- a specular slope function s2 = k(alpha1) * s1, with
  k(a) = c0 + c1 exp(-c2 a) + c3 exp(-c4 a^2) fitted to the per-roughness
  zero-intercept slopes of s2 against s1;
- a per-channel affine map for diffuse.

Because s2 is a single scalar multiple of s1, specular chromaticity is
preserved exactly and extrapolation beyond the sampled region stays linear.
An RBF kernel ridge regressor is included as the flexible-baseline
comparison; it interpolates well but has no such structural guarantee.

The c coefficients are not identifiable (the two exponential bumps can
trade off); correctness is always judged on the function values of k, never
on the coefficients.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import brdf
from .brdf import BrdfModelId, ROUGHNESS_BOUNDS
from .errors import CompositionError, DomainError, InsufficientDataError
from .leastsq import OptimizationProblem, minimize
from .remap import RemapScheme, ScanRow, ScanTable, stability_scan
from .render import SceneConfig

log = logging.getLogger(__name__)

TRANSFORM_FORMAT = "brdfremap-transform"
TRANSFORM_VERSION = 1

# Eq-style slope function fit: coefficient bounds and the documented
# multi-start seeds (built from the slope statistics in _fit_slope_fn).
SLOPE_COEFF_LOWER = np.array([-50.0, -100.0, 0.0, -100.0, 0.0])
SLOPE_COEFF_UPPER = np.array([50.0, 100.0, 60.0, 100.0, 60.0])

MIN_ROUGHNESS_LEVELS = 5
MIN_SPECULAR_PER_LEVEL = 3
MIN_UNFLAGGED_FRACTION = 0.6


# ---------------------------------------------------------------------------
# remap database

@dataclass
class RemapDatabase:
    source_model: BrdfModelId
    target_model: BrdfModelId
    scheme: RemapScheme
    rows: list
    roughness_grid: list
    specular_grid: list
    diffuse: tuple | None    # None = conductor sweep (diffuse pinned at 0)

    def unflagged_rows(self):
        return [r for r in self.rows if r.ok and not r.flagged]

    def to_scan_table(self) -> ScanTable:
        return ScanTable(self.source_model, self.target_model, self.scheme,
                         self.rows)

    def write_csv(self, path):
        self.to_scan_table().write_csv(path)

    def to_json(self) -> str:
        def params_out(p):
            return None if p is None else \
                {k: np.atleast_1d(v).tolist() for k, v in p.items()}
        doc = {
            "format": "brdfremap-database",
            "version": 1,
            "source_model": self.source_model.value,
            "target_model": self.target_model.value,
            "scheme": self.scheme.value,
            "roughness_grid": list(map(float, self.roughness_grid)),
            "specular_grid": list(map(float, self.specular_grid)),
            "diffuse": None if self.diffuse is None else list(self.diffuse),
            "rows": [{
                "source_params": params_out(r.source_params),
                "target_params": params_out(r.target_params),
                "l2": None if not np.isfinite(r.l2) else r.l2,
                "mean_ssim": None if not np.isfinite(r.mean_ssim) else r.mean_ssim,
                "hit_bound": r.hit_bound,
                "suspected_local_minimum": r.suspected_local_minimum,
                "error": r.error,
            } for r in self.rows],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RemapDatabase":
        doc = json.loads(text)
        if doc.get("format") != "brdfremap-database":
            raise DomainError("not a remap database document")

        def params_in(p):
            if p is None:
                return None
            return {k: (np.array(v) if len(v) > 1 else np.array(v[0]))
                    for k, v in p.items()}
        rows = [ScanRow(
            params_in(r["source_params"]), params_in(r["target_params"]),
            r["l2"] if r["l2"] is not None else float("nan"),
            r["mean_ssim"] if r["mean_ssim"] is not None else float("nan"),
            r["hit_bound"], r["suspected_local_minimum"], r["error"],
        ) for r in doc["rows"]]
        return cls(BrdfModelId.from_name(doc["source_model"]),
                   BrdfModelId.from_name(doc["target_model"]),
                   RemapScheme(doc["scheme"]), rows,
                   doc["roughness_grid"], doc["specular_grid"],
                   None if doc["diffuse"] is None else tuple(doc["diffuse"]))


def build_database(source_model: BrdfModelId, target_model: BrdfModelId,
                   roughness_grid, specular_grid,
                   scheme: RemapScheme = RemapScheme.TWO_STAGE,
                   scene: SceneConfig | None = None,
                   diffuse=None, workers: int = 1,
                   max_evals: int = 400) -> RemapDatabase:
    """Sweep (roughness x specular) source materials through remap_uniform.

    Row order is roughness-major, deterministic.  ``diffuse`` fixes the
    source diffuse color for a dielectric sweep; None builds a conductor
    sweep (diffuse pinned at zero on both sides).  Specular grid values are
    gray (applied to all three channels).
    """
    scene = scene or SceneConfig()
    diffuse_rgb = np.zeros(3) if diffuse is None else np.asarray(diffuse, float)
    sweep = [dict(diffuse_rgb=diffuse_rgb, specular_rgb=np.full(3, float(s)),
                  roughness=float(a))
             for a in roughness_grid for s in specular_grid]
    table = stability_scan(source_model, target_model, scheme, sweep, scene,
                           workers=workers, max_evals=max_evals,
                           segment_length=len(list(specular_grid)))
    return RemapDatabase(source_model, target_model, scheme, table.rows,
                         list(map(float, roughness_grid)),
                         list(map(float, specular_grid)),
                         None if diffuse is None else tuple(map(float, diffuse)))


# ---------------------------------------------------------------------------
# the parametric transform

def slope_fn(coeffs, alpha):
    """k(a) = c0 + c1 exp(-c2 a) + c3 exp(-c4 a^2)."""
    c0, c1, c2, c3, c4 = coeffs
    a = np.asarray(alpha, float)
    return c0 + c1 * np.exp(-c2 * a) + c3 * np.exp(-c4 * a * a)


@dataclass
class TransformModel:
    source_model: BrdfModelId
    target_model: BrdfModelId
    roughness_poly: np.ndarray      # np.polyval convention, highest first
    slope_coeffs: np.ndarray        # c0..c4
    diffuse_scale: np.ndarray       # per channel
    diffuse_offset: np.ndarray
    domain: dict                    # name -> (lo, hi) over the training rows
    fit_residuals: dict = field(default_factory=dict)

    @classmethod
    def identity(cls, model: BrdfModelId) -> "TransformModel":
        return cls(model, model, np.array([1.0, 0.0]),
                   np.array([1.0, 0.0, 1.0, 0.0, 1.0]),
                   np.ones(3), np.zeros(3),
                   {"roughness": ROUGHNESS_BOUNDS, "specular": (0.0, 1.0)})

    # -- evaluation ----------------------------------------------------------

    def _scalar_coeffs(self):
        # plain-float views of the coefficients for the scalar fast path
        cache = getattr(self, "_coeff_cache", None)
        if cache is None:
            cache = (tuple(map(float, self.roughness_poly)),
                     tuple(map(float, self.slope_coeffs)),
                     tuple(map(float, self.diffuse_scale)),
                     tuple(map(float, self.diffuse_offset)))
            object.__setattr__(self, "_coeff_cache", cache)
        return cache

    def predict_roughness(self, alpha):
        lo, hi = ROUGHNESS_BOUNDS
        return np.clip(np.polyval(self.roughness_poly, alpha), lo, hi)

    def slope(self, alpha):
        return slope_fn(self.slope_coeffs, alpha)

    def in_domain(self, params: dict) -> bool:
        a_lo, a_hi = self.domain["roughness"]
        s_lo, s_hi = self.domain["specular"]
        a = np.asarray(params["roughness"], float)
        s = np.asarray(params.get("specular_rgb", 0.0), float)
        return bool(np.all(a >= a_lo) and np.all(a <= a_hi)
                    and np.all(s >= s_lo) and np.all(s <= s_hi))

    # -- serialization -------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({
            "format": TRANSFORM_FORMAT,
            "version": TRANSFORM_VERSION,
            "source_model": self.source_model.value,
            "target_model": self.target_model.value,
            "roughness_poly": self.roughness_poly.tolist(),
            "slope_coeffs": self.slope_coeffs.tolist(),
            "diffuse_scale": self.diffuse_scale.tolist(),
            "diffuse_offset": self.diffuse_offset.tolist(),
            "domain": {k: list(v) for k, v in self.domain.items()},
            "fit_residuals": self.fit_residuals,
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "TransformModel":
        doc = json.loads(text)
        if doc.get("format") != TRANSFORM_FORMAT:
            raise DomainError("not a transform document")
        return cls(BrdfModelId.from_name(doc["source_model"]),
                   BrdfModelId.from_name(doc["target_model"]),
                   np.array(doc["roughness_poly"]),
                   np.array(doc["slope_coeffs"]),
                   np.array(doc["diffuse_scale"]),
                   np.array(doc["diffuse_offset"]),
                   {k: tuple(v) for k, v in doc["domain"].items()},
                   doc.get("fit_residuals", {}))

    def write_curves_csv(self, path, samples: int = 256):
        """(alpha1, alpha2, k) samples over the roughness domain, for plots."""
        lo, hi = ROUGHNESS_BOUNDS
        xs = np.linspace(lo, hi, samples)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["alpha1", "alpha2", "k"])
            for x in xs:
                w.writerow([x, float(self.predict_roughness(x)),
                            float(self.slope(x))])


def _group_levels(rows):
    """Rows grouped by source roughness; levels failing the unflagged quota
    are dropped entirely."""
    levels: dict[float, list] = {}
    for row in rows:
        if not row.ok:
            continue
        levels.setdefault(float(row.source_params["roughness"]), []).append(row)
    kept = {}
    for alpha, level_rows in sorted(levels.items()):
        good = [r for r in level_rows if not r.flagged]
        if len(good) / len(level_rows) >= MIN_UNFLAGGED_FRACTION:
            kept[alpha] = good
        else:
            log.info("dropping roughness level %.4g: only %d/%d rows unflagged",
                     alpha, len(good), len(level_rows))
    return kept


def _fit_slope_fn(alphas, slopes, residual_weight=None):
    """Multi-start bounded fit of k(a) through the per-level slopes."""
    alphas = np.asarray(alphas, float)
    slopes = np.asarray(slopes, float)
    kbar = float(np.mean(slopes))
    kmin, kmax = float(np.min(slopes)), float(np.max(slopes))
    spread = kmax - kmin
    seeds = [
        np.array([kbar, 0.0, 1.0, 0.0, 1.0]),
        np.array([kmin, spread, 3.0, 0.0, 1.0]),
        np.array([kmin, 0.0, 1.0, spread, 3.0]),
        np.array([kbar, spread / 2.0, 8.0, -spread / 2.0, 8.0]),
    ]

    def residual(c):
        return slope_fn(c, alphas) - slopes

    best = None
    for seed in seeds:
        seed = np.clip(seed, SLOPE_COEFF_LOWER, SLOPE_COEFF_UPPER)
        out = minimize(OptimizationProblem(
            residual, seed, SLOPE_COEFF_LOWER, SLOPE_COEFF_UPPER,
            max_evals=6000, step_tol=1e-12, cost_tol=1e-14, grad_tol=1e-14))
        if best is None or out.final_cost < best.final_cost:
            best = out
    rmse = math.sqrt(2.0 * best.final_cost / len(alphas))
    return best.x_final, rmse


def fit_transform(db: RemapDatabase) -> TransformModel:
    """Distill a remap database into a TransformModel.

    Flagged rows never participate.  Requires (after filtering) at least 5
    distinct roughness levels with at least 3 specular samples each.
    """
    levels = _group_levels(db.rows)
    if len(levels) < MIN_ROUGHNESS_LEVELS:
        raise InsufficientDataError(
            f"roughness axis: only {len(levels)} usable levels "
            f"(need {MIN_ROUGHNESS_LEVELS})")
    thin = [a for a, rows in levels.items() if len(rows) < MIN_SPECULAR_PER_LEVEL]
    if thin:
        raise InsufficientDataError(
            f"specular axis: roughness level(s) {thin} have fewer than "
            f"{MIN_SPECULAR_PER_LEVEL} unflagged samples")

    all_rows = [r for rows in levels.values() for r in rows]

    # (1) roughness polynomial, degree <= 4
    a1 = np.array([float(r.source_params["roughness"]) for r in all_rows])
    a2 = np.array([float(r.target_params["roughness"]) for r in all_rows])
    degree = min(4, len(levels) - 1)
    roughness_poly = np.polyfit(a1, a2, degree)
    rough_rmse = float(np.sqrt(np.mean((np.polyval(roughness_poly, a1) - a2) ** 2)))

    # (2) per-roughness zero-intercept slope of s2 against s1
    level_alphas, level_slopes, slope_rmses = [], [], []
    for alpha, rows in sorted(levels.items()):
        s1 = np.concatenate([np.atleast_1d(r.source_params["specular_rgb"])
                             for r in rows])
        s2 = np.concatenate([np.atleast_1d(r.target_params["specular_rgb"])
                             for r in rows])
        denom = float(s1 @ s1)
        if denom == 0.0:
            raise InsufficientDataError(
                f"specular axis: roughness level {alpha} has all-zero "
                f"source specular")
        k_hat = float(s1 @ s2 / denom)
        level_alphas.append(alpha)
        level_slopes.append(k_hat)
        slope_rmses.append(float(np.sqrt(np.mean((s2 - k_hat * s1) ** 2))))

    # (3) nonlinear fit of k(alpha) through the slopes
    slope_coeffs, k_rmse = _fit_slope_fn(level_alphas, level_slopes)

    # (4) per-channel diffuse map; zero intercept unless the sweep actually
    # varied diffuse (3+ distinct values per channel)
    d1 = np.array([np.atleast_1d(r.source_params.get("diffuse_rgb", np.zeros(3)))
                   for r in all_rows])
    d2 = np.array([np.atleast_1d(r.target_params.get("diffuse_rgb", np.zeros(3)))
                   for r in all_rows])
    scale = np.ones(3)
    offset = np.zeros(3)
    diffuse_sq_err = 0.0
    for ch in range(3):
        x, y = d1[:, ch], d2[:, ch]
        if len(np.unique(np.round(x, 12))) >= 3:
            coeffs, *_ = np.linalg.lstsq(np.vstack([x, np.ones_like(x)]).T, y,
                                         rcond=None)
            scale[ch], offset[ch] = coeffs
        elif float(x @ x) > 0.0:
            scale[ch] = float(x @ y / (x @ x))
        diffuse_sq_err += float(np.mean((scale[ch] * x + offset[ch] - y) ** 2))
    diffuse_rmse = math.sqrt(diffuse_sq_err / 3.0)

    s1_all = np.concatenate([np.atleast_1d(r.source_params["specular_rgb"])
                             for r in all_rows])
    domain = {
        "roughness": (float(a1.min()), float(a1.max())),
        "specular": (float(s1_all.min()), float(s1_all.max())),
    }
    residuals = {
        "roughness_rmse": rough_rmse,
        "slope_rmse_max": float(np.max(slope_rmses)),
        "k_fit_rmse": k_rmse,
        "diffuse_rmse": diffuse_rmse,
    }
    return TransformModel(db.source_model, db.target_model, roughness_poly,
                          slope_coeffs, scale, offset, domain, residuals)


# ---------------------------------------------------------------------------
# application

def apply_transform(t: TransformModel, params: dict,
                    diagnostics: dict | None = None) -> dict:
    """Map source parameters to target parameters; pure and render-free.

    Roughness depends only on roughness (clamped to the target bounds);
    specular is k(alpha1) * s1 per channel, never clamped, so linearity and
    chromaticity are exact even outside the training domain; diffuse goes
    through the per-channel affine map.  Scalars in, scalars out; arrays
    broadcast (per-texel maps).
    """
    alpha1 = params["roughness"]
    out = {}
    if isinstance(alpha1, (int, float)) and np.ndim(params.get("specular_rgb",
                                                               ())) <= 1:
        # scalar fast path: plain Python arithmetic (hot in per-texel loops)
        a = float(alpha1)
        poly_c, slope_c, ds, do = t._scalar_coeffs()
        poly = 0.0
        for c in poly_c:
            poly = poly * a + c
        lo, hi = ROUGHNESS_BOUNDS
        out["roughness"] = min(max(poly, lo), hi)
        c0, c1, c2, c3, c4 = slope_c
        k = c0 + c1 * math.exp(-c2 * a) + c3 * math.exp(-c4 * a * a)
        if "specular_rgb" in params:
            s1 = params["specular_rgb"]
            if isinstance(s1, (int, float)):
                out["specular_rgb"] = (k * s1,) * 3
            else:
                out["specular_rgb"] = tuple(k * float(v) for v in s1)
        if "diffuse_rgb" in params:
            d1 = params["diffuse_rgb"]
            if isinstance(d1, (int, float)):
                d1 = (d1,) * 3
            out["diffuse_rgb"] = tuple(ds[i] * float(d1[i]) + do[i]
                                       for i in range(3))
    else:
        alpha1 = np.asarray(alpha1, float)
        out["roughness"] = t.predict_roughness(alpha1)
        k = t.slope(alpha1)
        if "specular_rgb" in params:
            s1 = np.asarray(params["specular_rgb"], float)
            out["specular_rgb"] = k[..., None] * s1 if s1.ndim > alpha1.ndim \
                else k * s1
        if "diffuse_rgb" in params:
            d1 = np.asarray(params["diffuse_rgb"], float)
            out["diffuse_rgb"] = t.diffuse_scale * d1 + t.diffuse_offset
    if diagnostics is not None:
        diagnostics["out_of_domain"] = not t.in_domain(params)
    return out


@dataclass(frozen=True)
class ChainedTransform:
    """Composition of transforms through intermediate models."""

    transforms: tuple

    def __post_init__(self):
        if not self.transforms:
            raise CompositionError("empty transform chain")
        for a, b in zip(self.transforms, self.transforms[1:]):
            if a.target_model != b.source_model:
                raise CompositionError(
                    f"cannot chain {a.source_model.value}->{a.target_model.value} "
                    f"into {b.source_model.value}->{b.target_model.value}")

    @property
    def source_model(self) -> BrdfModelId:
        return self.transforms[0].source_model

    @property
    def target_model(self) -> BrdfModelId:
        return self.transforms[-1].target_model


def chain(transforms) -> ChainedTransform:
    return ChainedTransform(tuple(transforms))


def apply_any(t, params: dict) -> dict:
    """Apply a TransformModel or a ChainedTransform."""
    if isinstance(t, ChainedTransform):
        out = params
        for link in t.transforms:
            out = apply_transform(link, out)
        return out
    return apply_transform(t, params)


# ---------------------------------------------------------------------------
# kernel ridge baseline

@dataclass
class KernelRegressor:
    input_slots: list       # (param_name, component) per input column
    output_slots: list
    x_mean: np.ndarray
    x_std: np.ndarray
    support: np.ndarray     # standardized training inputs, (N, d)
    weights: np.ndarray     # (N, n_outputs)
    gamma: float
    ridge: float
    source_model: BrdfModelId = None
    target_model: BrdfModelId = None

    def predict_matrix(self, x_raw: np.ndarray) -> np.ndarray:
        z = (np.atleast_2d(x_raw) - self.x_mean) / self.x_std
        d2 = np.sum((z[:, None, :] - self.support[None, :, :]) ** 2, axis=-1)
        return np.exp(-self.gamma * d2) @ self.weights


def _param_matrix(rows, which, slots):
    data = np.empty((len(rows), len(slots)))
    for i, row in enumerate(rows):
        params = row.source_params if which == "source" else row.target_params
        for j, (name, comp) in enumerate(slots):
            data[i, j] = float(np.atleast_1d(params[name])[comp])
    return data


def _model_slots(model: BrdfModelId):
    slots = []
    for pd in brdf.model_def(model).params:
        slots.extend((pd.name, i) for i in range(pd.size))
    return slots


def fit_kernel_baseline(db: RemapDatabase, ridge: float = 1e-6) -> KernelRegressor:
    """RBF kernel ridge over the same unflagged rows fit_transform uses.

    Inputs are standardized; the kernel width follows the median-distance
    heuristic.  A singular kernel system escalates the ridge and warns.
    """
    levels = _group_levels(db.rows)
    if len(levels) < MIN_ROUGHNESS_LEVELS:
        raise InsufficientDataError(
            f"roughness axis: only {len(levels)} usable levels")
    rows = [r for level_rows in levels.values() for r in level_rows]
    in_slots = _model_slots(db.source_model)
    out_slots = _model_slots(db.target_model)
    x = _param_matrix(rows, "source", in_slots)
    y = _param_matrix(rows, "target", out_slots)

    x_mean = x.mean(axis=0)
    x_std = x.std(axis=0)
    x_std[x_std == 0.0] = 1.0
    z = (x - x_mean) / x_std
    d2 = np.sum((z[:, None, :] - z[None, :, :]) ** 2, axis=-1)
    off_diag = d2[np.triu_indices_from(d2, k=1)]
    median_d = math.sqrt(float(np.median(off_diag))) if off_diag.size else 1.0
    gamma = 1.0 / (2.0 * max(median_d, 1e-12) ** 2)
    k = np.exp(-gamma * d2)

    lam = ridge
    for attempt in range(6):
        try:
            weights = np.linalg.solve(k + lam * np.eye(len(rows)), y)
            break
        except np.linalg.LinAlgError:
            lam *= 100.0
            log.warning("kernel system singular; raising ridge to %g", lam)
    else:
        raise InsufficientDataError("kernel system unsolvable even with ridge")
    return KernelRegressor(in_slots, out_slots, x_mean, x_std, z, weights,
                           gamma, lam, db.source_model, db.target_model)


def apply_kernel(kr: KernelRegressor, params: dict) -> dict:
    x = np.array([[float(np.atleast_1d(params[name])[comp])
                   for name, comp in kr.input_slots]])
    pred = kr.predict_matrix(x)[0]
    out: dict = {}
    for (name, comp), value in zip(kr.output_slots, pred):
        pd = brdf.model_def(kr.target_model).param(name)
        if pd.size == 1:
            out[name] = float(value)
        else:
            out.setdefault(name, np.zeros(3))[comp] = value
    return out
