"""Command line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 bad input data,
4 numerical failure.  Errors are reported on stderr as one line
``error: <ErrorClass>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig
from .errors import ConfigError, TexelError

logger = logging.getLogger("texelseg")

NOISE_INTENSITIES = (0.05, 0.1, 0.2, 0.3)
NOISE_RUNS = 5
RESOLUTION_TARGETS = (100000, 50000, 25000, 10000, 5000)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="configuration file (see 'config show')")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration key (repeatable)")
    p.add_argument("--scale", type=float, help="radius as a fraction of the largest bbox side")
    p.add_argument("--orientation", choices=("positive", "negative"))
    p.add_argument("--workers", type=int, help="worker threads (0 = all cores)")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("-o", "--output-dir", dest="output_dir", help="directory for artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="texelseg",
                                     description="3D texel segmentation and texture annotation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (("segment", "depth map and texels"),
                           ("classify", "texels, features and texture classes"),
                           ("annotate", "texture classes with a semantic report")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("mesh", help="OFF or OBJ triangle mesh")
        _common(p)
        if name == "annotate":
            p.add_argument("--dictionary", help="semantic dictionary file")
            p.add_argument("--n-select", dest="n_select", type=int,
                           help="annotated features per class")

    bench = sub.add_parser("bench", help="synthetic benchmark")
    bsub = bench.add_subparsers(dest="bench_command", required=True)
    gen = bsub.add_parser("gen", help="displaced icosphere with ground truth")
    gen.add_argument("map", help="PGM or PNG displacement map")
    gen.add_argument("--out", required=True, help="output mesh (.off or .obj)")
    gen.add_argument("--subdivisions", type=int, default=7)
    gen.add_argument("--displacement", type=float, default=0.02,
                     help="maximum displacement as a fraction of the radius")
    gen.add_argument("--noise", type=float, default=0.0, help="noise intensity, %% of radius")
    gen.add_argument("--decimate", type=int, help="target face count")
    _common(gen)
    for name in ("noise", "resolution"):
        p = bsub.add_parser(name, help=f"{name} robustness sweep")
        p.add_argument("mesh")
        p.add_argument("--truth", help="vertex gray CSV (default: <mesh stem>_vertex_gray.csv)")
        if name == "noise":
            p.add_argument("--intensities", type=float, nargs="+", default=list(NOISE_INTENSITIES))
            p.add_argument("--runs", type=int, default=NOISE_RUNS)
        else:
            p.add_argument("--targets", type=int, nargs="+", default=list(RESOLUTION_TARGETS))
        _common(p)

    cfg = sub.add_parser("config", help="configuration utilities")
    csub = cfg.add_subparsers(dest="config_command", required=True)
    show = csub.add_parser("show", help="print the effective configuration")
    show.add_argument("--config")
    show.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    return parser


def load_config(args) -> PipelineConfig:
    config = PipelineConfig()
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        config = PipelineConfig.from_text(text)
    overrides = {}
    for item in getattr(args, "set", []) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for key in ("scale", "orientation", "workers", "seed", "output_dir", "dictionary", "n_select"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return config.updated(overrides).validate()


def _outdir(config: PipelineConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_depth(path, depth) -> None:
    with open(path, "w") as fh:
        fh.write("vertex_id,depth\n")
        fh.writelines(f"{i},{float(d)!r}\n" for i, d in enumerate(depth.vertex_depth))


def _segment_artifacts(mesh, result, out: Path, stem: str) -> list:
    from .mesh_io import facet_labels_to_vertex_colors, save_obj

    seg = result.segmentation
    paths = [out / f"{stem}_depth.csv", out / f"{stem}_segmentation.json", out / f"{stem}_texels.obj"]
    _write_depth(paths[0], result.depth)
    paths[1].write_text(seg.to_json() + "\n")
    colors = facet_labels_to_vertex_colors(mesh, seg.labels, max(len(seg.texels), 1))
    save_obj(paths[2], mesh, colors)
    if not seg.texels:
        print("notice: no seeds: the mesh has no salient detail at this scale", file=sys.stderr)
    return paths


def _classify_artifacts(mesh, result, out: Path, stem: str) -> list:
    from .mesh_io import facet_labels_to_vertex_colors, save_obj

    paths = [out / f"{stem}_features.csv", out / f"{stem}_clustering.json",
             out / f"{stem}_rotation_cost.csv", out / f"{stem}_classes.obj"]
    result.features.to_csv(paths[0])
    paths[1].write_text(result.clustering.to_json() + "\n")
    result.clustering.write_cost_csv(paths[2])
    texel_class = dict(zip(result.clustering.texel_ids.tolist(), result.clustering.labels.tolist()))
    labels = np.array([texel_class.get(t, -1) for t in result.segmentation.labels.tolist()])
    save_obj(paths[3], mesh, facet_labels_to_vertex_colors(mesh, labels, max(result.clustering.k, 1)))
    return paths


def cmd_segment(args, config) -> int:
    from .mesh_io import load_mesh
    from .pipeline import segment_mesh

    mesh = load_mesh(args.mesh)
    result = segment_mesh(mesh, config)
    stem = Path(args.mesh).stem
    for p in _segment_artifacts(mesh, result, _outdir(config), stem):
        logger.info("wrote %s", p)
    print(f"{len(result.segmentation.texels)} texels")
    return 0


def cmd_classify(args, config) -> int:
    from .mesh_io import load_mesh
    from .pipeline import classify_mesh

    mesh = load_mesh(args.mesh)
    result = classify_mesh(mesh, config)
    out, stem = _outdir(config), Path(args.mesh).stem
    for p in _segment_artifacts(mesh, result, out, stem) + _classify_artifacts(mesh, result, out, stem):
        logger.info("wrote %s", p)
    print(f"{len(result.segmentation.texels)} texels, {result.clustering.k} classes")
    return 0


def cmd_annotate(args, config) -> int:
    from .annotation import report_json, report_text
    from .mesh_io import load_mesh
    from .pipeline import annotate_mesh

    mesh = load_mesh(args.mesh)
    result = annotate_mesh(mesh, config)
    out, stem = _outdir(config), Path(args.mesh).stem
    paths = _segment_artifacts(mesh, result, out, stem) + _classify_artifacts(mesh, result, out, stem)
    text = report_text(result.annotations)
    (out / f"{stem}_annotation.json").write_text(report_json(result.annotations) + "\n")
    (out / f"{stem}_annotation.txt").write_text(text)
    for p in paths:
        logger.info("wrote %s", p)
    print(text, end="")
    return 0


def _truth_for(args, mesh):
    from .synthetic import load_truth

    path = args.truth or str(Path(args.mesh).with_name(Path(args.mesh).stem + "_vertex_gray.csv"))
    return load_truth(mesh, path)


def cmd_bench_gen(args, config) -> int:
    from .mesh_io import save_mesh
    from .synthetic import (add_noise, decimate, displace, icosphere, read_displacement_map,
                            save_truth)

    dmap = read_displacement_map(args.map, args.displacement)
    mesh, truth = displace(icosphere(args.subdivisions), dmap)
    if args.noise > 0:
        mesh = add_noise(mesh, args.noise, seed=config.seed, radius=1.0)
    if args.decimate:
        mesh, truth = decimate(mesh, args.decimate, truth)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_mesh(out, mesh)
    save_truth(truth, out.with_name(out.stem + "_vertex_gray.csv"),
               out.with_name(out.stem + "_facet_labels.csv"))
    print(f"{mesh.n_faces} faces, {int(truth.facet_foreground.sum())} foreground facets")
    return 0


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return repr(float(x)) if np.isfinite(x) else "nan"


def cmd_bench_noise(args, config) -> int:
    from .evaluation import noise_sweep
    from .mesh_io import load_mesh

    mesh = load_mesh(args.mesh)
    truth = _truth_for(args, mesh)
    summaries, rows = noise_sweep(mesh, truth, args.intensities, args.runs, config)
    out = _outdir(config)
    _write_rows(out / "noise_sweep.csv", ("intensity", "run", "d_H", "texel_count", "extra_regions"),
                [(r.axis_value, r.run, _fmt(r.d_h), r.texel_count, r.extra_regions) for r in rows])
    _write_rows(out / "noise_summary.dat", ("# intensity", "mean", "min", "max"),
                [(s.axis_value, _fmt(s.mean), _fmt(s.min), _fmt(s.max)) for s in summaries])
    for s in summaries:
        print(f"I={s.axis_value:g}: d_H mean {s.mean:.5g} [{s.min:.5g}, {s.max:.5g}]")
    return 0


def cmd_bench_resolution(args, config) -> int:
    from .evaluation import resolution_sweep
    from .mesh_io import load_mesh

    mesh = load_mesh(args.mesh)
    truth = _truth_for(args, mesh)
    summaries, rows = resolution_sweep(mesh, truth, args.targets, config)
    out = _outdir(config)
    _write_rows(out / "resolution_sweep.csv", ("faces", "d_H", "delta_t"),
                [(r.faces, _fmt(r.d_h), _fmt(r.delta_t)) for r in rows])
    _write_rows(out / "resolution_summary.dat", ("# faces", "d_H", "delta_t"),
                [(r.faces, _fmt(r.d_h), _fmt(r.delta_t)) for r in rows])
    for r in rows:
        print(f"{r.faces} faces: d_H {r.d_h:.5g}, delta_t {r.delta_t:.5g}")
    return 0


def cmd_config_show(args, config) -> int:
    print(config.to_text(), end="")
    return 0


COMMANDS = {
    ("segment", None): cmd_segment,
    ("classify", None): cmd_classify,
    ("annotate", None): cmd_annotate,
    ("bench", "gen"): cmd_bench_gen,
    ("bench", "noise"): cmd_bench_noise,
    ("bench", "resolution"): cmd_bench_resolution,
    ("config", "show"): cmd_config_show,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    sub = getattr(args, "bench_command", None) or getattr(args, "config_command", None)
    try:
        config = load_config(args)
        return COMMANDS[(args.command, sub)](args, config)
    except TexelError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
