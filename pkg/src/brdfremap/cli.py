"""Command-line front end.

Every command is a thin wrapper over one library operation.  Numeric
results are duplicated as CSV for external plotting, and the fully resolved
option set is echoed into each output directory as resolved-config.json so
any run can be reproduced with ``--config <that file>``.

Exit codes: 0 success; 1 error (with a machine-readable
``error[<category>]: <message>`` line on stderr); 2 success with stability
flags raised.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import imageio, metrics, svbrdf
from .brdf import BrdfModelId, parse_spec_text
from .errors import BrdfRemapError, ConfigurationError
from .remap import RemapScheme, remap_uniform, round_trip
from .render import (LightConfig, RenderedImage, RenderPass, SceneConfig,
                     render)
from .transform import (RemapDatabase, TransformModel, build_database, chain,
                        fit_transform)

PASSES = {"full": RenderPass.FULL, "diffuse": RenderPass.DIFFUSE_ONLY,
          "specular": RenderPass.SPECULAR_ONLY}


# ---------------------------------------------------------------------------
# small value parsers

def parse_light(text: str) -> LightConfig:
    if text == "headlight":
        return LightConfig.headlight()
    if text.startswith("oblique:"):
        return LightConfig.oblique(float(text.split(":", 1)[1]))
    raise ConfigurationError(
        f"bad light {text!r}; expected 'headlight' or 'oblique:<degrees>'")


def parse_grid(text: str) -> list:
    """'lo:hi:n' (inclusive linspace) or comma-separated values."""
    if ":" in text:
        lo, hi, n = text.split(":")
        return [float(v) for v in np.linspace(float(lo), float(hi), int(n))]
    return [float(v) for v in text.split(",")]


def parse_rgb(text: str):
    vals = [float(v) for v in text.split(",")]
    if len(vals) == 1:
        vals = vals * 3
    if len(vals) != 3:
        raise ConfigurationError(f"bad color {text!r}; expected r,g,b")
    return tuple(vals)


def load_spec_file(path: str):
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"spec file {path} does not exist")
    return parse_spec_text(p.read_text())


def scene_from_args(args) -> SceneConfig:
    size = int(args.size)
    return SceneConfig(image_size=(size, size), light=parse_light(args.light))


def angle_light(theta: float) -> LightConfig:
    return LightConfig.headlight() if theta == 0.0 else LightConfig.oblique(theta)


# ---------------------------------------------------------------------------
# config echo / reload

def echo_config(args, out_dir: Path):
    options = {k: v for k, v in vars(args).items()
               if k not in ("func", "command", "config") and v is not None}
    doc = {"command": args.command, "options": options}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved-config.json").write_text(json.dumps(doc, indent=1))


def require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise ConfigurationError(
                f"missing required option --{name.replace('_', '-')}")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# commands

def cmd_render(args) -> int:
    require(args, "spec", "out")
    spec = load_spec_file(args.spec)
    scene = scene_from_args(args)
    img = render(spec, scene, PASSES[args.render_pass])
    out = Path(args.out)
    echo_config(args, out)
    imageio.write_pfm(out / "render.pfm", img.pixels.astype(np.float32))
    if args.png:
        imageio.write_png_rgb8(out / "render.png", img.pixels, transfer="srgb")
    print(f"rendered {img.width}x{img.height} {args.render_pass} pass -> {out}")
    return 0


def cmd_compare(args) -> int:
    require(args, "image_a", "image_b")
    a = RenderedImage.from_array(imageio.read_pfm(args.image_a).astype(float))
    b = RenderedImage.from_array(imageio.read_pfm(args.image_b).astype(float))
    report = metrics.ssim(a, b)
    print(f"l2={report.l2:.9g}")
    print(f"mean_ssim={report.mean_ssim:.9g}")
    print(f"mean_dissimilarity={report.mean_dissimilarity:.9g}")
    if args.out:
        out = Path(args.out)
        echo_config(args, out)
        write_csv(out / "compare.csv", report.csv_header(), [report.csv_row()])
        imageio.write_pfm(out / "ssim_map.pfm",
                          report.ssim_map.astype(np.float32))
        imageio.write_false_color_png(out / "ssim_map.png", report.ssim_map,
                                      -1.0, 1.0)
    return 0


def _write_remap_outputs(out: Path, source_spec, result, scene):
    src_img = render(source_spec, scene, RenderPass.FULL)
    tgt_img = render(result.target_spec, scene, RenderPass.FULL)
    report = metrics.ssim(src_img, tgt_img)
    (out / "target.brdf").write_text(result.target_spec.to_text())
    imageio.write_pfm(out / "source_full.pfm", src_img.pixels.astype(np.float32))
    imageio.write_pfm(out / "target_full.pfm", tgt_img.pixels.astype(np.float32))
    imageio.write_pfm(out / "ssim_map.pfm", report.ssim_map.astype(np.float32))
    imageio.write_false_color_png(out / "ssim_map.png", report.ssim_map, -1.0, 1.0)
    header = ["l2", "mean_ssim", "mean_dissimilarity", "hit_bound",
              "suspected_local_minimum"]
    row = [result.l2, result.mean_ssim, 1.0 - result.mean_ssim,
           int(result.flags.hit_bound), int(result.flags.suspected_local_minimum)]
    for i, stage in enumerate(result.stages, 1):
        header += [f"stage{i}_initial_cost", f"stage{i}_final_cost",
                   f"stage{i}_evals"]
        row += [stage.initial_cost, stage.final_cost, stage.n_evals]
    write_csv(out / "summary.csv", header, [row])


def cmd_remap_uniform(args) -> int:
    require(args, "spec", "target", "out")
    source = load_spec_file(args.spec)
    target_model = BrdfModelId.from_name(args.target)
    scheme = RemapScheme(args.scheme)
    scene = scene_from_args(args)
    result = remap_uniform(source, target_model, scheme, scene,
                           light_scale=float(args.light_scale),
                           max_evals=int(args.max_evals))
    out = Path(args.out)
    echo_config(args, out)
    _write_remap_outputs(out, source, result, scene)

    if args.eval_angles:
        rows = []
        for theta in parse_grid(args.eval_angles):
            eval_scene = scene.with_light(angle_light(theta))
            rep = metrics.ssim(render(source, eval_scene),
                               render(result.target_spec, eval_scene))
            rows.append([theta, rep.l2, rep.mean_ssim, rep.mean_dissimilarity])
        write_csv(out / "angles.csv",
                  ["theta_deg", "l2", "mean_ssim", "mean_dissimilarity"], rows)

    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"remapped {source.model.value} -> {target_model.value}: "
          f"l2={result.l2:.6g} mean_ssim={result.mean_ssim:.6g}")
    if result.flags.any:
        print(f"stability flags: hit_bound={result.flags.hit_bound} "
              f"suspected_local_minimum={result.flags.suspected_local_minimum}",
              file=sys.stderr)
        return 2
    return 0


def cmd_roundtrip(args) -> int:
    require(args, "spec", "via", "out")
    source = load_spec_file(args.spec)
    via = BrdfModelId.from_name(args.via)
    scheme = RemapScheme(args.scheme)
    scene = scene_from_args(args)
    recovered, deviations, fwd, back = round_trip(
        source, via, scheme, scene, max_evals=int(args.max_evals))
    out = Path(args.out)
    echo_config(args, out)
    (out / "recovered.brdf").write_text(recovered.to_text())
    rows = []
    for name, devs in deviations.items():
        original = np.atleast_1d(source.values[name])
        got = np.atleast_1d(recovered.values[name])
        for i, dev in enumerate(np.atleast_1d(devs)):
            rows.append([f"{name}[{i}]", original[i], got[i], dev])
    write_csv(out / "deviations.csv",
              ["parameter", "original", "recovered", "relative_deviation"], rows)
    flagged = fwd.flags.any or back.flags.any
    print(f"round trip via {via.value}: max deviation "
          f"{max(float(np.max(d)) for d in deviations.values()):.6g}")
    return 2 if flagged else 0


def cmd_sweep(args) -> int:
    require(args, "source", "target", "roughness_grid", "specular_grid", "out")
    db = build_database(
        BrdfModelId.from_name(args.source), BrdfModelId.from_name(args.target),
        parse_grid(args.roughness_grid), parse_grid(args.specular_grid),
        scheme=RemapScheme(args.scheme), scene=scene_from_args(args),
        diffuse=parse_rgb(args.diffuse) if args.diffuse else None,
        workers=int(args.workers), max_evals=int(args.max_evals))
    out = Path(args.out)
    echo_config(args, out)
    db.write_csv(out / "scan.csv")
    (out / "database.json").write_text(db.to_json())
    n_flagged = sum(1 for r in db.rows if r.flagged or not r.ok)
    print(f"swept {len(db.rows)} points ({n_flagged} flagged) -> {out}")
    return 0


def cmd_fit_transform(args) -> int:
    require(args, "database", "out")
    db = RemapDatabase.from_json(Path(args.database).read_text())
    t = fit_transform(db)
    out = Path(args.out)
    echo_config(args, out)
    (out / "transform.json").write_text(t.to_json())
    t.write_curves_csv(out / "curves.csv")
    print(f"fitted transform {t.source_model.value} -> {t.target_model.value}; "
          f"residuals: {t.fit_residuals}")
    return 0


def cmd_remap_svbrdf(args) -> int:
    require(args, "material", "transform", "out")
    maps, model = svbrdf.load_material(args.material)
    transforms = [TransformModel.from_json(Path(p).read_text())
                  for p in args.transform]
    t = transforms[0] if len(transforms) == 1 else chain(transforms)
    if t.source_model != model:
        raise ConfigurationError(
            f"material is {model.value} but transform starts at "
            f"{t.source_model.value}")
    report: dict = {}
    remapped = svbrdf.remap_maps(maps, t, report=report)
    out = Path(args.out)
    echo_config(args, out)
    svbrdf.save_material(out, remapped, t.target_model, precise=args.precise)
    (out / "remap-summary.json").write_text(json.dumps(report, indent=1))
    if args.previews:
        light = parse_light(args.light)
        for tag, m, mdl in (("source", maps, model),
                            ("remapped", remapped, t.target_model)):
            img = svbrdf.preview_render(m, mdl, light, RenderPass.SPECULAR_ONLY)
            imageio.write_pfm(out / f"preview_{tag}_specular.pfm",
                              img.pixels.astype(np.float32))
            imageio.write_png_rgb8(out / f"preview_{tag}_specular.png",
                                   img.pixels, transfer="srgb")
    print(f"remapped {maps.shape[1]}x{maps.shape[0]} maps "
          f"{model.value} -> {t.target_model.value}; "
          f"clamped: {report['clamped_texels']}")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brdfremap",
        description="Translate material appearance between BRDF models.")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.command_parsers = {}

    def add_parser(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        parser.command_parsers[name] = p
        return p

    def common(p, scene=True):
        p.add_argument("--config", help="JSON file of option defaults "
                       "(flags given on the command line win)")
        p.add_argument("--out", help="output directory")
        if scene:
            p.add_argument("--size", default=256,
                           help="square render resolution (default 256)")
            p.add_argument("--light", default="headlight",
                           help="headlight | oblique:<degrees>")

    p = add_parser("render", help="render a spec file to PFM")
    common(p)
    p.add_argument("--spec", help="BRDF spec file")
    p.add_argument("--pass", dest="render_pass", default="full",
                   choices=sorted(PASSES))
    p.add_argument("--png", action="store_true", help="also write sRGB PNG")
    p.set_defaults(func=cmd_render)

    p = add_parser("compare", help="L2 / SSIM between two PFM images")
    common(p, scene=False)
    p.add_argument("--image-a")
    p.add_argument("--image-b")
    p.set_defaults(func=cmd_compare)

    p = add_parser("remap-uniform", help="fit one material to a new model")
    common(p)
    p.add_argument("--spec", help="source BRDF spec file")
    p.add_argument("--target", help="target model name")
    p.add_argument("--scheme", default="two-stage",
                   choices=[s.value for s in RemapScheme])
    p.add_argument("--max-evals", default=400)
    p.add_argument("--light-scale", default=1.0,
                   help="irradiance-matching factor applied to the target "
                        "light (from irradiance_match of diffuse renders)")
    p.add_argument("--eval-angles",
                   help="light angles (deg) for a post-fit comparison matrix")
    p.set_defaults(func=cmd_remap_uniform)

    p = add_parser("roundtrip", help="remap there and back, report deviation")
    common(p)
    p.add_argument("--spec")
    p.add_argument("--via", help="intermediate model name")
    p.add_argument("--scheme", default="two-stage",
                   choices=[s.value for s in RemapScheme])
    p.add_argument("--max-evals", default=400)
    p.set_defaults(func=cmd_roundtrip)

    p = add_parser("sweep", help="parameter sweep -> scan CSV + database")
    common(p)
    p.add_argument("--source", help="source model name")
    p.add_argument("--target", help="target model name")
    p.add_argument("--scheme", default="two-stage",
                   choices=[s.value for s in RemapScheme])
    p.add_argument("--roughness-grid", help="lo:hi:n or comma list")
    p.add_argument("--specular-grid", help="lo:hi:n or comma list")
    p.add_argument("--diffuse", help="r,g,b source diffuse (omit for conductor)")
    p.add_argument("--workers", default=1)
    p.add_argument("--max-evals", default=400)
    p.set_defaults(func=cmd_sweep)

    p = add_parser("fit-transform", help="fit the parametric transform")
    common(p, scene=False)
    p.add_argument("--database", help="database.json from a sweep")
    p.set_defaults(func=cmd_fit_transform)

    p = add_parser("remap-svbrdf", help="remap texture maps of a material")
    common(p)
    p.add_argument("--material", help="material folder with manifest")
    p.add_argument("--transform", nargs="+",
                   help="transform.json file(s); several files form a chain")
    p.add_argument("--precise", action="store_true",
                   help="write PFM maps instead of PNG")
    p.add_argument("--previews", action="store_true",
                   help="write specular-only plane previews")
    p.set_defaults(func=cmd_remap_svbrdf)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        loaded = json.loads(Path(args.config).read_text())
        defaults = loaded.get("options", loaded)
        # reparse with the config as that command's defaults; explicit
        # flags still win (defaults must go on the subparser, which parses
        # into a fresh namespace)
        parser.command_parsers[args.command].set_defaults(**defaults)
        args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrdfRemapError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
