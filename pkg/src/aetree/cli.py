"""``aetree`` command-line front end.

Each subcommand resolves its options as flags > ``AETREE_<OPTION>``
environment variables > JSON config file > built-in defaults, writes that
resolved configuration (plus the tool version) to ``run_config.json`` in its
output directory, and only then starts work.

Exit codes: 0 ok, 2 usage / invalid argument, 3 malformed input file,
4 numeric divergence, 5 I/O failure, 1 anything else.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from pathlib import Path

from . import __version__
from .errors import AETreeError, ComponentCollapse, InvalidArgument, SchemaError, TrainingDiverged

log = logging.getLogger("aetree")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_SCHEMA, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3, 4, 5
ENV_PREFIX = "AETREE_"
RUN_CONFIG = "run_config.json"

# name -> (default, type, help); every name is also a config-file key and an env variable
GLOBAL_OPTIONS = {
    "seed": (0, int, "random seed for every stochastic step"),
    "out": ("aetree-out", str, "output directory"),
    "threads": (1, int, "worker threads for compiled kernels and BLAS"),
}

COMMANDS = {
    "synth": ("generate a synthetic grid city (buildings file)", {
        "rows": (8, int, "grid rows"),
        "cols": (8, int, "grid columns"),
        "jitter": (0.5, float, "perturbation strength in [0, 1]"),
        "cell": (10.0, float, "grid cell size"),
        "min_height": (-1.0, float, "lower height bound; negative means flat footprints"),
        "max_height": (-1.0, float, "upper height bound"),
    }),
    "ingest": ("footprints -> normalized layout sets + split manifest", {
        "buildings": (None, str, "buildings JSONL file"),
        "k": (32, int, "buildings per layout set"),
        "ratios": ("0.7,0.1,0.2", str, "train,val,test ratios"),
    }),
    "build-trees": ("layout sets -> SGD spatial trees (forest file)", {
        "layouts": (None, str, "layout-set JSONL file"),
        "weights": ("5,2,0.1,1,1", str, "SGD weights: center,area,shape,angle,merge"),
    }),
    "train": ("train the tree autoencoder", {
        "forest": (None, str, "forest file"),
        "manifest": (None, str, "split manifest; restricts training to --split"),
        "split": ("train", str, "split name used with --manifest"),
        "hidden_size": (256, int, "LSTM hidden width H (latent is 2H)"),
        "learning_rate": (1e-3, float, "initial Adam learning rate"),
        "lr_halving_period": (400, int, "steps between learning-rate halvings"),
        "batch_size": (50, int, "layout sets per step"),
        "gamma": (0.8, float, "per-level loss weight base"),
        "bce_weight": (1.0, float, "leaf-indicator loss weight"),
        "max_epochs": (100, int, "epoch limit"),
        "max_steps": (0, int, "step limit (0 = none)"),
        "representation": ("relative", str, "relative | absolute (ablation)"),
        "checkpoint_every": (1, int, "epochs between checkpoints"),
    }),
    "reconstruct": ("encode + free-decode a forest and report CD/EMD/OAR", {
        "checkpoint": (None, str, "model checkpoint"),
        "forest": (None, str, "forest file"),
        "manifest": (None, str, "split manifest"),
        "split": ("", str, "split name used with --manifest (empty = all)"),
        "mode": ("2d", str, "point clouds from 2d or 3d corners"),
        "svg": (True, bool, "write one SVG per layout"),
    }),
    "fit-gmm": ("grid-search a Gaussian mixture over root latents", {
        "checkpoint": (None, str, "model checkpoint"),
        "forest": (None, str, "forest file"),
        "manifest": (None, str, "split manifest"),
        "split": ("train", str, "split name used with --manifest"),
        "components": ("5", str, "comma-separated component counts"),
        "cov_types": ("full", str, "comma-separated covariance types"),
        "n_eval": (0, int, "layouts generated per grid cell (0 = reference-set size)"),
        "resolution": (28, int, "JSD voxel resolution"),
    }),
    "generate": ("sample latents from a GMM and decode layouts", {
        "checkpoint": (None, str, "model checkpoint"),
        "gmm": (None, str, "fitted mixture file"),
        "n": (20, int, "layouts to generate"),
        "reference": (None, str, "forest file to evaluate JSD/COV/MMD against"),
        "manifest": (None, str, "split manifest for --reference"),
        "split": ("", str, "split name used with --manifest"),
        "mode": ("2d", str, "point clouds from 2d or 3d corners"),
        "resolution": (28, int, "JSD voxel resolution"),
    }),
    "interpolate": ("decode along the latent segment between two sets", {
        "checkpoint": (None, str, "model checkpoint"),
        "forest": (None, str, "forest file"),
        "a": (None, str, "start set id"),
        "b": (None, str, "end set id"),
        "steps": (5, int, "number of points including both ends"),
    }),
    "cluster": ("PCA + GMM clustering of root latents", {
        "checkpoint": (None, str, "model checkpoint"),
        "forest": (None, str, "forest file"),
        "d": (50, int, "PCA dimensions"),
        "K": (11, int, "clusters"),
        "regions": (None, str, "CSV with set_id,region for the deviation report"),
    }),
    "export": ("render layouts or forest leaves as SVG or OBJ", {
        "input": (None, str, "layout-set JSONL or forest file"),
        "format": ("svg", str, "svg | obj"),
        "scene_units": (False, bool, "undo the per-set normalization first"),
        "columns": (8, int, "SVG tiles per row"),
    }),
}


class UsageError(InvalidArgument):
    pass


def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {v!r}")


def _coerce(name, value, typ):
    if value is None:
        return None
    try:
        if typ is bool:
            return _parse_bool(value)
        if typ is int and isinstance(value, float) and not value.is_integer():
            raise ValueError
        return typ(value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"option {name}: cannot read {value!r} as {typ.__name__}") from exc


def _options(command: str) -> dict:
    return {**GLOBAL_OPTIONS, **COMMANDS[command][1]}


def resolve_config(command: str, flags: dict, env=None, config_path=None) -> dict:
    """Merge defaults < config file < environment < flags for one command.

    The config file is a JSON object; top-level keys apply to every command
    and an object under the command's name overrides them for that command.
    """
    env = os.environ if env is None else env
    opts = _options(command)
    cfg = {k: opt[0] for k, opt in opts.items()}
    if config_path:
        try:
            with open(config_path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{config_path}:{exc.lineno}: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise SchemaError(f"{config_path}:1: config must be a JSON object")
        layered = {k: v for k, v in doc.items() if k not in COMMANDS}
        section = doc.get(command, {})
        if not isinstance(section, dict):
            raise SchemaError(f"{config_path}: section {command!r} must be an object")
        layered.update(section)
        known = set(opts) | {k for c in COMMANDS for k in COMMANDS[c][1]}
        for k, v in layered.items():
            if k not in known:
                raise SchemaError(f"{config_path}: unknown option {k!r}")
            if k in opts:
                cfg[k] = _coerce(k, v, opts[k][1])
    for k, (_, typ, _) in opts.items():
        key = ENV_PREFIX + k.upper().replace("-", "_")
        if key in env:
            cfg[k] = _coerce(k, env[key], typ)
    for k, v in flags.items():
        if k in opts:
            cfg[k] = _coerce(k, v, opts[k][1])
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    for name, (_, typ, hlp) in GLOBAL_OPTIONS.items():
        common.add_argument(f"--{name}", type=typ, help=hlp)
    common.add_argument("--config", help="JSON config file (also AETREE_CONFIG)")
    common.add_argument("-v", "--verbose", action="count", help="more logging (repeatable)")
    parser = argparse.ArgumentParser(prog="aetree", parents=[common],
                                     description="Building-layout tree autoencoder toolkit.")
    parser.add_argument("--version", action="version", version=f"aetree {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for cmd, (hlp, opts) in COMMANDS.items():
        p = sub.add_parser(cmd, help=hlp, parents=[common], argument_default=argparse.SUPPRESS)
        for name, (default, typ, ohlp) in opts.items():
            flag = "--" + name.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction,
                               help=f"{ohlp} (default {default})")
            else:
                p.add_argument(flag, dest=name, type=str, help=f"{ohlp} (default {default})")
    return parser


# ----------------------------------------------------------------- helpers

def _require(cfg, *names):
    missing = [n for n in names if cfg.get(n) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _floats(text, n=None):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise UsageError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _prepare_out(cfg, command) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    doc = {"tool": "aetree", "version": __version__, "command": command, "config": cfg}
    with open(out / RUN_CONFIG, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return out


def _set_threads(n: int) -> None:
    if n < 1:
        raise UsageError("--threads must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    from . import kernels
    if kernels.BACKEND == "numba":
        import numba
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # threading-layer probes warn on old TBB
            numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _select(items, manifest_path, split_name):
    if not manifest_path or not split_name:
        return list(items)
    from .dataset import read_manifest
    m = read_manifest(manifest_path)
    if split_name not in m.splits:
        raise UsageError(f"manifest has no split {split_name!r}")
    keep = set(m.splits[split_name])
    return [t for t in items if t.id in keep]


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _scene(cuboids, frame):
    from .tree import denormalize_params
    return denormalize_params(cuboids, frame)


# ---------------------------------------------------------------- commands

def cmd_synth(cfg, out):
    from .dataset import synth_city, write_buildings
    heights = None
    if cfg["min_height"] >= 0 and cfg["max_height"] >= cfg["min_height"]:
        heights = (cfg["min_height"], cfg["max_height"])
    city = synth_city(cfg["rows"], cfg["cols"], cfg["jitter"], cfg["seed"], cfg["cell"], heights=heights)
    write_buildings(out / "buildings.jsonl", city)
    log.info("wrote %d buildings", len(city))


def cmd_ingest(cfg, out):
    from .dataset import build_layout_sets, ingest_cuboids, read_buildings, split, write_manifest
    from .tree import write_layouts
    _require(cfg, "buildings")
    buildings = read_buildings(cfg["buildings"])
    kept, cubs = ingest_cuboids(buildings)
    sets = build_layout_sets(kept, cfg["k"], cubs)
    manifest = split([s.id for s in sets], _floats(cfg["ratios"], 3), cfg["seed"])
    if len(kept) < len(buildings):
        manifest.notes.append(f"skipped {len(buildings) - len(kept)} degenerate footprints")
    write_layouts(out / "layouts.jsonl", sets)
    write_manifest(out / "manifest.json", manifest)
    log.info("%d layout sets, split %s", len(sets), manifest.sizes())


def cmd_build_trees(cfg, out):
    from .tree import SgdWeights, build_tree, read_layouts, write_forest
    _require(cfg, "layouts")
    weights = SgdWeights(*_floats(cfg["weights"], 5))
    trees, skipped = [], []
    for s in read_layouts(cfg["layouts"]):
        try:
            trees.append(build_tree(s, weights))
        except AETreeError as exc:
            log.warning("skipping set %s: %s", s.id, exc)
            skipped.append((s.id, str(exc)))
    if not trees:
        raise InvalidArgument("every layout set was degenerate")
    write_forest(out / "forest.txt", trees)
    _write_csv(out / "skipped.csv", ["set_id", "reason"], skipped)
    log.info("built %d trees, skipped %d", len(trees), len(skipped))


def cmd_train(cfg, out):
    from .autoencoder import TrainConfig, save_checkpoint, train
    from .tree import read_forest
    _require(cfg, "forest")
    forest = _select(read_forest(cfg["forest"]), cfg["manifest"], cfg["split"])
    tc = TrainConfig(
        learning_rate=cfg["learning_rate"], lr_halving_period_steps=cfg["lr_halving_period"],
        batch_size_sets=cfg["batch_size"], level_weight_gamma=cfg["gamma"],
        bce_weight=cfg["bce_weight"], max_epochs=cfg["max_epochs"], max_steps=cfg["max_steps"],
        rng_seed=cfg["seed"], hidden_size=cfg["hidden_size"], representation=cfg["representation"],
        checkpoint_every=cfg["checkpoint_every"],
    )
    model, history = train(forest, tc, checkpoint_dir=out)
    save_checkpoint(out / "model.ckpt", model, tc)
    _write_csv(out / "loss.csv", ["step", "lr", "loss"],
               [(s, repr(float(lr)), repr(float(v))) for s, lr, v in history])
    log.info("trained %d steps on %d trees, final loss %.6g", len(history), len(forest),
             history[-1][2] if history else float("nan"))


def _load_model(cfg):
    from .autoencoder import load_checkpoint
    _require(cfg, "checkpoint")
    model, _ = load_checkpoint(cfg["checkpoint"])
    return model


def _report_files(out, report):
    (out / "report.csv").write_text(report.to_csv())
    (out / "report.txt").write_text(report.to_text())
    sys.stdout.write(report.to_text())


def cmd_reconstruct(cfg, out):
    from .autoencoder import reconstruct
    from .export import write_svg
    from .metrics import reconstruction_report
    from .tree import LayoutSet, read_forest, write_layouts
    _require(cfg, "forest")
    model = _load_model(cfg)
    trees = _select(read_forest(cfg["forest"]), cfg["manifest"], cfg["split"])
    decoded = reconstruct(trees, model)
    report = reconstruction_report([t.leaves() for t in trees], decoded, cfg["mode"])
    write_layouts(out / "reconstructed.jsonl", [LayoutSet(t.id, d, t.frame) for t, d in zip(trees, decoded)])
    _report_files(out, report)
    if cfg["svg"]:
        svg_dir = out / "svg"
        svg_dir.mkdir(exist_ok=True)
        for t, d in zip(trees, decoded):
            write_svg(svg_dir / f"{t.id}.svg", [(f"{t.id}-input", t.leaves()), (t.id, d)])


def _latents_and_layouts(cfg, model, split_default=None):
    from .autoencoder import encode_forest
    from .tree import read_forest
    _require(cfg, "forest")
    trees = _select(read_forest(cfg["forest"]), cfg.get("manifest"), cfg.get("split", split_default))
    if not trees:
        raise InvalidArgument("no trees selected")
    return trees, encode_forest(trees, model)


def _generate(model, gmm, n, seed):
    from .autoencoder import decode_free_batch
    from .gmm import gmm_sample
    Z = gmm_sample(gmm, n, seed)
    return decode_free_batch(model.root_prior, Z, model)


def cmd_fit_gmm(cfg, out):
    from .gmm import COV_TYPES, gmm_grid_search, save_gmm, write_grid_csv
    from .metrics import jsd, layout_to_points
    model = _load_model(cfg)
    trees, Z = _latents_and_layouts(cfg, model)
    grid = [int(v) for v in _floats(cfg["components"])]
    cov_types = [c.strip() for c in cfg["cov_types"].split(",") if c.strip()]
    bad = [c for c in cov_types if c not in COV_TYPES]
    if bad or not grid:
        raise UsageError(f"bad grid: components={grid}, cov_types={cov_types}")
    ref = [layout_to_points(t.leaves()) for t in trees]

    def evaluate(g):
        layouts = _generate(model, g, cfg["n_eval"] or len(ref), cfg["seed"])
        return jsd(ref, [layout_to_points(c) for c in layouts], cfg["resolution"])

    rows, best, best_model = gmm_grid_search(Z, grid, cov_types, evaluate, cfg["seed"])
    write_grid_csv(out / "grid.csv", rows)
    save_gmm(out / "gmm.bin", best_model)
    log.info("best cell K=%d %s JSD=%.6g", *best)


def cmd_generate(cfg, out):
    from .export import write_svg
    from .gmm import load_gmm
    from .metrics import generation_report
    from .tree import LayoutSet, read_forest, write_layouts
    _require(cfg, "gmm")
    if cfg["n"] < 1:
        raise UsageError("--n must be >= 1")
    model = _load_model(cfg)
    layouts = _generate(model, load_gmm(cfg["gmm"]), cfg["n"], cfg["seed"])
    sets = [LayoutSet(f"gen{k:05d}", c) for k, c in enumerate(layouts)]
    write_layouts(out / "generated.jsonl", sets)
    write_svg(out / "generated.svg", [(s.id, s.cuboids) for s in sets], columns=min(len(sets), 8))
    reference = None
    if cfg["reference"]:
        trees = _select(read_forest(cfg["reference"]), cfg["manifest"], cfg["split"])
        reference = [t.leaves() for t in trees]
    _report_files(out, generation_report(reference, layouts, cfg["mode"], cfg["resolution"]))


def cmd_interpolate(cfg, out):
    import numpy as np
    from .autoencoder import decode_free_batch, encode_forest
    from .export import write_svg
    from .gmm import interpolate
    from .tree import LayoutSet, read_forest, write_layouts
    _require(cfg, "forest", "a", "b")
    model = _load_model(cfg)
    by_id = {t.id: t for t in read_forest(cfg["forest"])}
    for key in ("a", "b"):
        if cfg[key] not in by_id:
            raise UsageError(f"set {cfg[key]!r} not in forest")
    ta, tb = by_id[cfg["a"]], by_id[cfg["b"]]
    Z = encode_forest([ta, tb], model)
    lat = interpolate(Z[0], Z[1], cfg["steps"])
    roots = interpolate(ta.absolute[ta.root], tb.absolute[tb.root], cfg["steps"])
    layouts = decode_free_batch(roots, lat, model)
    alphas = np.linspace(0.0, 1.0, cfg["steps"])
    sets = [LayoutSet(f"step{k:03d}", c) for k, c in enumerate(layouts)]
    for s in sets:
        write_svg(out / f"{s.id}.svg", [(s.id, s.cuboids)])
    write_svg(out / "strip.svg", [(s.id, s.cuboids) for s in sets])
    write_layouts(out / "interpolated.jsonl", sets)
    _write_csv(out / "steps.csv", ["step", "alpha", "n_cuboids"],
               [(k, repr(float(a)), len(c)) for k, (a, c) in enumerate(zip(alphas, layouts))])


def cmd_cluster(cfg, out):
    from .gmm import FEATURE_NAMES, cluster_latents, composition_deviation, save_gmm, save_pca
    model = _load_model(cfg)
    trees, Z = _latents_and_layouts(cfg, model)
    scene = [_scene(t.leaves(), t.frame) for t in trees]
    res = cluster_latents(Z, scene, cfg["d"], cfg["K"], cfg["seed"])
    _write_csv(out / "labels.csv", ["set_id", "cluster"], [(t.id, int(l)) for t, l in zip(trees, res.labels)])
    head = ["cluster", "share"] + list(FEATURE_NAMES) + [f"{n}_norm" for n in FEATURE_NAMES]
    rows = []
    for k in range(cfg["K"]):
        rows.append([k, repr(float(res.composition[k]))]
                    + [repr(float(v)) for v in res.features[k]]
                    + [repr(float(v)) for v in res.normalized[k]])
    _write_csv(out / "features.csv", head, rows)
    save_pca(out / "pca.bin", res.pca)
    save_gmm(out / "cluster_gmm.bin", res.gmm)
    if cfg["regions"]:
        with open(cfg["regions"], newline="") as fh:
            reader = csv.reader(fh)
            lookup = {}
            for ln, row in enumerate(reader, start=1):
                if ln == 1 and row[:2] == ["set_id", "region"]:
                    continue
                if len(row) < 2:
                    raise SchemaError(f"{cfg['regions']}:{ln}: expected set_id,region")
                lookup[row[0]] = row[1]
        missing = [t.id for t in trees if t.id not in lookup]
        if missing:
            raise SchemaError(f"{cfg['regions']}: no region for set {missing[0]!r}")
        dev = composition_deviation(res.labels, [lookup[t.id] for t in trees], cfg["K"])
        _write_csv(out / "region_deviation.csv", ["region"] + [f"c{k}_pp" for k in range(cfg["K"])],
                   [[r] + [repr(float(v)) for v in d] for r, d in dev.items()])


def cmd_export(cfg, out):
    from .export import write_obj, write_svg
    from .tree import FOREST_MAGIC, read_forest, read_layouts
    _require(cfg, "input")
    if cfg["format"] not in ("svg", "obj"):
        raise UsageError("--format must be svg or obj")
    with open(cfg["input"]) as fh:
        first = fh.readline()
    if first.startswith(FOREST_MAGIC):
        items = [(t.id, t.leaves(), t.frame) for t in read_forest(cfg["input"])]
    else:
        items = [(s.id, s.cuboids, s.frame) for s in read_layouts(cfg["input"])]
    layouts = [(i, _scene(c, f) if cfg["scene_units"] else c) for i, c, f in items]
    if cfg["format"] == "svg":
        write_svg(out / "layouts.svg", layouts, columns=cfg["columns"])
    else:
        write_obj(out / "layouts.obj", layouts, spacing=None if cfg["scene_units"] else 1.5)


HANDLERS = {
    "synth": cmd_synth, "ingest": cmd_ingest, "build-trees": cmd_build_trees, "train": cmd_train,
    "reconstruct": cmd_reconstruct, "fit-gmm": cmd_fit_gmm, "generate": cmd_generate,
    "interpolate": cmd_interpolate, "cluster": cmd_cluster, "export": cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help/--version, 2 for usage
        return int(exc.code or 0)
    flags = vars(ns)
    command = flags.pop("command", None)
    if command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    verbose = flags.pop("verbose", 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    config_path = flags.pop("config", None) or os.environ.get(ENV_PREFIX + "CONFIG")
    try:
        cfg = resolve_config(command, flags, config_path=config_path)
        _set_threads(cfg["threads"])
        out = _prepare_out(cfg, command)
        HANDLERS[command](cfg, out)
    except SchemaError as exc:
        log.error("%s", exc)
        return EXIT_SCHEMA
    except (TrainingDiverged, ComponentCollapse, FloatingPointError) as exc:
        log.error("numeric divergence: %s", exc)
        return EXIT_DIVERGED
    except (InvalidArgument, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
