import numpy as np
import pytest

from brdfremap.brdf import BrdfModelId, make_spec
from brdfremap.remap import (RemapScheme, ScanRow, _mark_jumps,
                             _mark_quality_contrast, default_seed,
                             remap_uniform, round_trip, stability_scan)
from brdfremap.render import RenderPass, SceneConfig, render

ALL_MODELS = list(BrdfModelId)


def truth_spec(model):
    if model == BrdfModelId.LAMBERT:
        return make_spec(model, diffuse_rgb=(0.45, 0.3, 0.2))
    return make_spec(model, diffuse_rgb=(0.45, 0.3, 0.2), specular_rgb=0.5,
                     roughness=0.22)


@pytest.mark.parametrize("model", ALL_MODELS)
@pytest.mark.parametrize("scheme", list(RemapScheme))
def test_self_remap_fixed_point(model, scheme, fast_scene):
    src = truth_spec(model)
    result = remap_uniform(src, model, scheme, fast_scene, x0=src)
    assert result.l2 <= 1e-10
    assert len(result.stages) == scheme.stage_count
    for name, value, *_ in src.param_entries():
        assert np.array_equal(result.target_spec.values[name], value)


def test_lambert_to_ward_forces_zero_specular(fast_scene):
    src = make_spec(BrdfModelId.LAMBERT, diffuse_rgb=(0.5, 0.2, 0.1))
    result = remap_uniform(src, BrdfModelId.WARD_A, RemapScheme.TWO_STAGE,
                           fast_scene)
    assert np.allclose(result.target_spec.values["diffuse_rgb"], (0.5, 0.2, 0.1),
                       atol=1e-6)
    assert np.all(result.target_spec.values["specular_rgb"] < 1e-3)
    # confirm by rendering the residual
    src_img = render(src, fast_scene, RenderPass.FULL)
    tgt_img = render(result.target_spec, fast_scene, RenderPass.FULL)
    assert np.max(np.abs(src_img.pixels - tgt_img.pixels)) < 1e-4


def test_specular_source_to_lambert_flags_capability(fast_scene):
    src = make_spec(BrdfModelId.GGX, diffuse_rgb=0.3, specular_rgb=0.8,
                    roughness=0.2)
    result = remap_uniform(src, BrdfModelId.LAMBERT, RemapScheme.TWO_STAGE,
                           fast_scene)
    assert result.warnings  # unmatched specular capability, not fatal
    assert len(result.stages) == 2


def test_wardb_trim_saturation_sets_hit_bound(fast_scene):
    src = make_spec(BrdfModelId.WARD_B, diffuse_rgb=0.0, specular_rgb=1.2,
                    roughness=0.2)
    result = remap_uniform(src, BrdfModelId.WARD_B, RemapScheme.TWO_STAGE,
                           fast_scene)
    assert result.flags.hit_bound
    assert result.l2 < 1e-6  # the plateau matches appearance perfectly


def test_two_stage_diffuse_fit_ignores_source_specular(fit_scene):
    # stage 1 sees only the diffuse-only render, which is independent of the
    # source specular parameters for an uncoupled source model
    base = dict(diffuse_rgb=(0.4, 0.25, 0.15), roughness=0.2)
    src_a = make_spec(BrdfModelId.WARD_A, specular_rgb=0.2, **base)
    src_b = make_spec(BrdfModelId.WARD_A, specular_rgb=0.9, **base)
    ra = remap_uniform(src_a, BrdfModelId.GGX, RemapScheme.TWO_STAGE, fit_scene)
    rb = remap_uniform(src_b, BrdfModelId.GGX, RemapScheme.TWO_STAGE, fit_scene)
    assert np.array_equal(ra.target_spec.values["diffuse_rgb"],
                          rb.target_spec.values["diffuse_rgb"])
    assert ra.stages[0].n_evals == rb.stages[0].n_evals


def test_three_stage_starts_at_two_stage_seed(fast_scene):
    src = make_spec(BrdfModelId.WARD_A, diffuse_rgb=(0.3, 0.3, 0.3),
                    specular_rgb=0.6, roughness=0.3)
    result = remap_uniform(src, BrdfModelId.BECKMANN, RemapScheme.THREE_STAGE,
                           fast_scene)
    final_stage = result.stages[-1]
    assert final_stage.final_cost <= final_stage.initial_cost


def test_conductor_source_pins_target_diffuse(fast_scene):
    src = make_spec(BrdfModelId.WARD_A, diffuse_rgb=0.0, specular_rgb=0.7,
                    roughness=0.25)
    result = remap_uniform(src, BrdfModelId.GGX, RemapScheme.TWO_STAGE,
                           fast_scene)
    assert np.all(result.target_spec.values["diffuse_rgb"] == 0.0)
    assert not result.flags.hit_bound


def test_default_seed_policy():
    src = make_spec(BrdfModelId.WARD_A, diffuse_rgb=(0.7, 0.6, 0.5),
                    specular_rgb=0.9, roughness=0.05)
    seed = default_seed(src, BrdfModelId.GGX, conductor=False)
    assert np.allclose(seed.values["diffuse_rgb"], (0.7, 0.6, 0.5))
    assert np.allclose(seed.values["specular_rgb"], 0.5)
    assert float(seed.values["roughness"]) == 0.3


def test_round_trip_same_model_recovers_parameters(fast_scene):
    src = make_spec(BrdfModelId.GGX, diffuse_rgb=(0.3, 0.2, 0.1),
                    specular_rgb=0.6, roughness=0.3)
    recovered, deviations, fwd, back = round_trip(
        src, BrdfModelId.GGX, RemapScheme.TWO_STAGE, fast_scene, x0=src)
    assert max(float(np.max(d)) for d in deviations.values()) < 1e-6


def test_round_trip_cross_model_conductor(fit_scene):
    src = make_spec(BrdfModelId.WARD_A, diffuse_rgb=0.0,
                    specular_rgb=(0.8, 0.6, 0.4), roughness=0.15)
    recovered, deviations, fwd, back = round_trip(
        src, BrdfModelId.GGX, RemapScheme.TWO_STAGE, fit_scene)
    assert not fwd.flags.hit_bound and not back.flags.hit_bound
    assert float(np.max(deviations["specular_rgb"])) < 0.05


def test_round_trip_reports_flags_without_raising(fast_scene):
    src = make_spec(BrdfModelId.WARD_B, diffuse_rgb=0.0, specular_rgb=1.5,
                    roughness=0.2)
    recovered, deviations, fwd, back = round_trip(
        src, BrdfModelId.WARD_B, RemapScheme.TWO_STAGE, fast_scene)
    assert fwd.flags.hit_bound
    assert np.all(np.isfinite(deviations["specular_rgb"]))


# ---------------------------------------------------------------------------
# scans

def test_scan_single_point(fast_scene):
    table = stability_scan(
        BrdfModelId.WARD_A, BrdfModelId.WARD_A, RemapScheme.TWO_STAGE,
        [dict(diffuse_rgb=(0.3, 0.3, 0.3), specular_rgb=0.5, roughness=0.3)],
        fast_scene)
    assert len(table.rows) == 1
    assert table.rows[0].ok


def test_scan_is_order_preserving_and_parallel_safe(fast_scene):
    sweep = [dict(diffuse_rgb=0.0, specular_rgb=s, roughness=0.2)
             for s in (0.2, 0.5, 0.8)]
    seq = stability_scan(BrdfModelId.WARD_A, BrdfModelId.WARD_A,
                         RemapScheme.TWO_STAGE, sweep, fast_scene, workers=1)
    par = stability_scan(BrdfModelId.WARD_A, BrdfModelId.WARD_A,
                         RemapScheme.TWO_STAGE, sweep, fast_scene, workers=3)
    for a, b in zip(seq.rows, par.rows):
        assert np.allclose(
            np.atleast_1d(a.target_params["specular_rgb"]),
            np.atleast_1d(b.target_params["specular_rgb"]))
    vals = [float(np.atleast_1d(r.source_params["specular_rgb"])[0])
            for r in seq.rows]
    assert vals == [0.2, 0.5, 0.8]


def test_conductor_f0_sweep_monotone_and_smooth(fit_scene):
    # two-stage remapping of conductors along an F0 sweep at fixed roughness:
    # the remapped specular column rises monotonically and stays smooth
    # (second finite difference bounded by 10x its median)
    f0s = np.linspace(0.1, 0.95, 8)
    sweep = [dict(diffuse_rgb=0.0, specular_rgb=float(f), roughness=0.2)
             for f in f0s]
    table = stability_scan(BrdfModelId.WARD_A, BrdfModelId.GGX,
                           RemapScheme.TWO_STAGE, sweep, fit_scene)
    rows = [r for r in table.rows if r.ok and not r.flagged]
    assert len(rows) == len(sweep)
    spec = np.array([float(np.atleast_1d(r.target_params["specular_rgb"])[0])
                     for r in rows])
    assert np.all(np.diff(spec) >= 0.0)
    d2 = np.abs(np.diff(spec, n=2))
    assert float(d2.max()) <= 10.0 * float(np.median(d2))


def test_scan_csv_schema(fast_scene, tmp_path):
    table = stability_scan(
        BrdfModelId.WARD_A, BrdfModelId.GGX, RemapScheme.TWO_STAGE,
        [dict(diffuse_rgb=0.0, specular_rgb=s, roughness=0.2)
         for s in (0.3, 0.6)],
        fast_scene)
    path = tmp_path / "scan.csv"
    table.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 3
    header = lines[0].split(",")
    assert "src_specular_rgb_r" in header
    assert "tgt_roughness" in header
    assert header[-1] == "error"


def _row(spec_r, rough, ssim_val=0.99):
    src = dict(diffuse_rgb=np.zeros(3), specular_rgb=np.full(3, 0.5),
               roughness=np.array(0.3))
    tgt = dict(diffuse_rgb=np.zeros(3), specular_rgb=np.full(3, spec_r),
               roughness=np.array(rough))
    return ScanRow(src, tgt, 0.01, ssim_val, False, False)


def test_jump_detector_flags_discontinuity():
    rows = [_row(0.1 + 0.01 * i, 0.2) for i in range(6)]
    rows += [_row(0.9 + 0.01 * i, 0.2) for i in range(6)]   # basin switch
    _mark_jumps(rows, BrdfModelId.GGX)
    assert rows[6].suspected_local_minimum
    assert sum(r.suspected_local_minimum for r in rows) == 1


def test_jump_detector_ignores_smooth_and_noisy_columns():
    rng = np.random.default_rng(0)
    rows = [_row(0.1 + 0.05 * i + rng.normal(0, 1e-6), 0.2 + 1e-7 * i)
            for i in range(12)]
    _mark_jumps(rows, BrdfModelId.GGX)
    assert not any(r.suspected_local_minimum for r in rows)


def test_quality_contrast_detector():
    rows = [_row(0.5, 0.2, ssim_val=s) for s in (0.995, 0.92, 0.991)]
    _mark_quality_contrast(rows)
    assert rows[1].suspected_local_minimum
    assert not rows[0].suspected_local_minimum


def test_scan_isolates_per_point_failures(fast_scene, monkeypatch):
    import brdfremap.remap as remap_mod

    real = remap_mod.remap_uniform
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 2:
            raise RuntimeError("synthetic failure")
        return real(*args, **kwargs)

    monkeypatch.setattr(remap_mod, "remap_uniform", flaky)
    table = stability_scan(
        BrdfModelId.WARD_A, BrdfModelId.WARD_A, RemapScheme.TWO_STAGE,
        [dict(diffuse_rgb=0.0, specular_rgb=s, roughness=0.2)
         for s in (0.3, 0.5, 0.7)],
        fast_scene)
    assert [r.ok for r in table.rows] == [True, False, True]
    assert "synthetic failure" in table.rows[1].error
