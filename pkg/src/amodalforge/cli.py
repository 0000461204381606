"""Command-line surface: dataset synthesis, box expansion, metric evaluation.

Four commands: `synth` writes composited training samples, `infer` runs the
box-expansion loop against a pluggable backend, `eval` computes the metric
artifacts, and `report` re-prints the headline numbers from a finished run's
artifacts. Every command writes its fully resolved flag set as
`<command>_config.json` next to its outputs, and `--config <file>` reloads
such a file as defaults so a run can be reproduced byte for byte.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import os
import pathlib
import sys

from . import datagen, inference, metrics
from .core import BBox, dump_json, load_image, load_json, save_heatmap, save_mask_png
from .protocol import BackendTimeoutError, BackendUnavailableError, ProtocolError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise UsageError(message)


def entrypoint():
    sys.exit(main(sys.argv[1:]))


def main(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "handler", None) is None:
            raise UsageError("a command is required (synth, infer, eval, report)")
        args.handler(args)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ProtocolError as exc:
        print(f"error: backend protocol violation: {exc}", file=sys.stderr)
        return 2
    except (BackendUnavailableError, BackendTimeoutError) as exc:
        print(f"error: backend unavailable: {exc}", file=sys.stderr)
        return 2
    except datagen.GenerationFailedError as exc:
        print(f"error: generation failed: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


# ---------------------------------------------------------------------------
# Flag resolution

_REQUIRED = object()

# (flag name, default); _REQUIRED means the flag must be supplied
SYNTH_FIELDS = (
    ("manifest", _REQUIRED),
    ("out", _REQUIRED),
    ("count", 100),
    ("seed", 0),
    ("jobs", 0),  # 0 selects the processor count at run time
    ("patch_overlap_min", 0.70),
    ("patch_size_min", 0.70),
    ("patch_size_max", 2.00),
    ("max_overlays", 2),
    ("overlay_scale_mean", 0.75),
    ("visibility_min", 0.30),
    ("jitter_overlap_min", 0.75),
    ("jitter_size_tol", 0.10),
    ("generation_mode", "dynamic"),
    ("max_retries", 50),
    ("max_restarts", 10),
)

INFER_FIELDS = (
    ("image", _REQUIRED),
    ("modal_box", _REQUIRED),
    ("category", _REQUIRED),
    ("backend", _REQUIRED),
    ("modal_backend", "none"),
    ("out", _REQUIRED),
    ("expansion_threshold", 0.1),
    ("margin_frac", 0.125),
    ("amodal_mask_threshold", 0.7),
    ("modal_mask_threshold", 0.8),
    ("max_iterations", 20),
    ("modal_margin_frac", 0.0),
    ("timeout", 30.0),
)

EVAL_OCCLUSION_FIELDS = (("samples", _REQUIRED), ("out", _REQUIRED), ("bins", 100))
EVAL_MASKS_FIELDS = (("ious", _REQUIRED), ("out", _REQUIRED))
EVAL_DETSEG_FIELDS = (("preds", _REQUIRED), ("gts", _REQUIRED),
                      ("cutoff", 0.5), ("out", _REQUIRED))
REPORT_FIELDS = (("run", _REQUIRED),)


def _resolve(args, fields) -> dict:
    """Merge CLI values over a --config file over built-in defaults."""
    config = {}
    if getattr(args, "config", None) is not None:
        loaded = load_json(args.config)
        if not isinstance(loaded, dict):
            raise UsageError(f"config file {args.config} must hold a JSON object")
        config = loaded
    resolved = {}
    for name, default in fields:
        value = getattr(args, name)
        if value is None:
            value = config.get(name, default)
        if value is _REQUIRED:
            raise UsageError(f"--{name.replace('_', '-')} is required")
        resolved[name] = value
    return resolved


def _write_config(resolved: dict, out_dir: pathlib.Path, command: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_json(resolved, out_dir / f"{command}_config.json")


def _parse_box(text) -> BBox:
    parts = str(text).split(",")
    if len(parts) != 4:
        raise UsageError(f"box must be x0,y0,x1,y1 integers, got {text!r}")
    try:
        coords = [int(p) for p in parts]
        return BBox(*coords)
    except ValueError as exc:
        raise UsageError(f"bad box {text!r}: {exc}") from None


# ---------------------------------------------------------------------------
# synth

_WORKER_STATE = {}


def _synth_init(manifest_path, cfg_kwargs):
    _WORKER_STATE["manifest"] = datagen.load_manifest(manifest_path)
    _WORKER_STATE["cfg"] = datagen.GenConfig(**cfg_kwargs)


def _synth_one(task):
    seed, out_root = task
    sample = datagen.generate_example(_WORKER_STATE["manifest"], _WORKER_STATE["cfg"], seed)
    datagen.write_sample_dir(sample, pathlib.Path(out_root) / f"sample_{seed:08d}")
    return seed


def cmd_synth(args):
    resolved = _resolve(args, SYNTH_FIELDS)
    if resolved["generation_mode"] not in ("dynamic", "fixed"):
        raise UsageError(f"generation mode must be dynamic or fixed, "
                         f"got {resolved['generation_mode']!r}")
    count = int(resolved["count"])
    if count < 0:
        raise UsageError(f"count must be >= 0, got {count}")
    out_dir = pathlib.Path(resolved["out"])
    _write_config(resolved, out_dir, "synth")
    cfg_kwargs = dict(
        patch_overlap_min=float(resolved["patch_overlap_min"]),
        patch_size_min=float(resolved["patch_size_min"]),
        patch_size_max=float(resolved["patch_size_max"]),
        max_overlays=int(resolved["max_overlays"]),
        overlay_scale_mean=float(resolved["overlay_scale_mean"]),
        visibility_min=float(resolved["visibility_min"]),
        jitter_overlap_min=float(resolved["jitter_overlap_min"]),
        jitter_size_tol=float(resolved["jitter_size_tol"]),
        dynamic_generation=resolved["generation_mode"] == "dynamic",
        max_retries=int(resolved["max_retries"]),
        max_restarts=int(resolved["max_restarts"]),
    )
    seeds = [int(resolved["seed"]) + i for i in range(count)]
    jobs = int(resolved["jobs"]) or (os.cpu_count() or 1)
    jobs = max(1, jobs)
    tasks = [(seed, str(out_dir)) for seed in seeds]
    if jobs == 1 or count <= 1:
        _synth_init(resolved["manifest"], cfg_kwargs)
        for task in tasks:
            _synth_one(task)
    else:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=min(jobs, count),
            initializer=_synth_init,
            initargs=(resolved["manifest"], cfg_kwargs),
        ) as pool:
            list(pool.map(_synth_one, tasks, chunksize=max(1, count // (4 * jobs))))
    print(f"wrote {count} samples to {out_dir}")


# ---------------------------------------------------------------------------
# infer


def cmd_infer(args):
    resolved = _resolve(args, INFER_FIELDS)
    out_dir = pathlib.Path(resolved["out"])
    _write_config(resolved, out_dir, "infer")
    image = load_image(resolved["image"])
    modal_box = _parse_box(resolved["modal_box"])
    params = inference.ExpansionParams(
        expansion_threshold=float(resolved["expansion_threshold"]),
        margin_frac=float(resolved["margin_frac"]),
        amodal_mask_threshold=float(resolved["amodal_mask_threshold"]),
        modal_mask_threshold=float(resolved["modal_mask_threshold"]),
        max_iterations=int(resolved["max_iterations"]),
    )
    timeout = float(resolved["timeout"])
    backend = inference.resolve_backend(resolved["backend"],
                                        margin_frac=params.margin_frac, timeout=timeout)
    modal_backend = None
    try:
        if resolved["modal_backend"] != "none":
            modal_backend = inference.resolve_backend(
                resolved["modal_backend"],
                margin_frac=float(resolved["modal_margin_frac"]), timeout=timeout)
        result = inference.expand_amodal_box(
            image, modal_box, str(resolved["category"]), backend,
            params=params, modal_backend=modal_backend)
    finally:
        backend.close()
        if modal_backend is not None:
            modal_backend.close()

    dump_json({
        "image": str(resolved["image"]),
        "category": resolved["category"],
        "backend": resolved["backend"],
        "modal_backend": resolved["modal_backend"],
        "params": dataclasses.asdict(params),
        "modal_box": list(modal_box.as_tuple()),
        "amodal_box": list(result.amodal_box.as_tuple()),
        "iterations": result.iterations,
        "expansion_trace": [
            {
                "iteration": step.iteration,
                "margin_means": list(step.margin_means),
                "expanded": list(step.expanded),
                "box_after": list(step.box_after.as_tuple()),
            }
            for step in result.expansion_trace
        ],
    }, out_dir / "result.json")
    save_heatmap(result.amodal_heatmap, out_dir / "amodal.hmap")
    save_mask_png(result.amodal_mask, out_dir / "amodal.png")
    save_mask_png(result.modal_mask, out_dir / "modal.png")
    print(f"amodal_box={list(result.amodal_box.as_tuple())} iterations={result.iterations}")


# ---------------------------------------------------------------------------
# eval


def cmd_eval_occlusion(args):
    resolved = _resolve(args, EVAL_OCCLUSION_FIELDS)
    out_dir = pathlib.Path(resolved["out"])
    _write_config(resolved, out_dir, "eval_occlusion")
    samples = metrics.read_area_ratio_samples(resolved["samples"])
    curve = metrics.occlusion_pr(samples)
    metrics.write_pr_curve_csv(curve, out_dir / "pr_curve.csv")
    metrics.write_histogram_csv(samples, out_dir / "histogram.csv",
                                bins=int(resolved["bins"]))
    print(f"AP={curve.average_precision:.4f}")


def cmd_eval_masks(args):
    resolved = _resolve(args, EVAL_MASKS_FIELDS)
    out_dir = pathlib.Path(resolved["out"])
    _write_config(resolved, out_dir, "eval_masks")
    ious = metrics.read_ious(resolved["ious"])
    curve = metrics.accuracy_curve(ious)
    metrics.write_accuracy_curve_csv(curve, out_dir / "accuracy_curve.csv")
    print(f"acc@50={curve.acc_at_50:.4f} acc@70={curve.acc_at_70:.4f} AUC={curve.auc:.4f}")


def cmd_eval_detseg(args):
    resolved = _resolve(args, EVAL_DETSEG_FIELDS)
    out_dir = pathlib.Path(resolved["out"])
    _write_config(resolved, out_dir, "eval_detseg")
    preds = metrics.read_detseg_predictions(resolved["preds"])
    gts = metrics.read_ground_truths(resolved["gts"])
    report = metrics.map_r(preds, gts, float(resolved["cutoff"]))
    metrics.write_map_report_json(report, out_dir / "map_report.json")
    for cat in sorted(report.per_category):
        print(f"AP[{cat}]={report.per_category[cat]:.4f}")
    print(f"mAP^r={report.mean_ap:.4f}")


# ---------------------------------------------------------------------------
# report


def cmd_report(args):
    resolved = _resolve(args, REPORT_FIELDS)
    run_dir = pathlib.Path(resolved["run"])
    if not run_dir.is_dir():
        raise UsageError(f"run directory {run_dir} does not exist")
    _write_config(resolved, run_dir, "report")
    found = False
    pr_path = run_dir / "pr_curve.csv"
    if pr_path.exists():
        with open(pr_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        points = [(float(r["recall"]), float(r["precision"])) for r in rows]
        print(f"AP={metrics._envelope_ap(points):.4f}")
        found = True
    acc_path = run_dir / "accuracy_curve.csv"
    if acc_path.exists():
        with open(acc_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        accs = {float(r["cutoff"]): float(r["accuracy"]) for r in rows}
        auc = sum(accs.values()) / len(accs)
        parts = []
        if 0.5 in accs:
            parts.append(f"acc@50={accs[0.5]:.4f}")
        if 0.7 in accs:
            parts.append(f"acc@70={accs[0.7]:.4f}")
        parts.append(f"AUC={auc:.4f}")
        print(" ".join(parts))
        found = True
    map_path = run_dir / "map_report.json"
    if map_path.exists():
        data = load_json(map_path)
        for cat, ap in data["per_category"].items():
            print(f"AP[{cat}]={ap:.4f}")
        print(f"mAP^r={data['mean_ap']:.4f}")
        found = True
    result_path = run_dir / "result.json"
    if result_path.exists():
        data = load_json(result_path)
        print(f"amodal_box={data['amodal_box']} iterations={data['iterations']}")
        found = True
    if not found:
        raise UsageError(f"no artifacts found under {run_dir}")


# ---------------------------------------------------------------------------
# Parser


def _add_config_flag(parser):
    parser.add_argument("--config", help="JSON file of previously resolved flags")


def _build_parser() -> _Parser:
    parser = _Parser(prog="amodalforge",
                     description="Occlusion-composite data, amodal box expansion, "
                                 "and occlusion metrics")
    sub = parser.add_subparsers(dest="command")

    synth = sub.add_parser("synth", help="generate composited training samples")
    _add_config_flag(synth)
    synth.add_argument("--manifest")
    synth.add_argument("--out")
    synth.add_argument("--count", type=int)
    synth.add_argument("--seed", type=int)
    synth.add_argument("--jobs", type=int)
    synth.add_argument("--patch-overlap-min", type=float, dest="patch_overlap_min")
    synth.add_argument("--patch-size-min", type=float, dest="patch_size_min")
    synth.add_argument("--patch-size-max", type=float, dest="patch_size_max")
    synth.add_argument("--max-overlays", type=int, dest="max_overlays")
    synth.add_argument("--overlay-scale-mean", type=float, dest="overlay_scale_mean")
    synth.add_argument("--visibility-min", type=float, dest="visibility_min")
    synth.add_argument("--jitter-overlap-min", type=float, dest="jitter_overlap_min")
    synth.add_argument("--jitter-size-tol", type=float, dest="jitter_size_tol")
    synth.add_argument("--generation-mode", choices=("dynamic", "fixed"),
                       dest="generation_mode")
    synth.add_argument("--max-retries", type=int, dest="max_retries")
    synth.add_argument("--max-restarts", type=int, dest="max_restarts")
    synth.set_defaults(handler=cmd_synth)

    infer = sub.add_parser("infer", help="run iterative box expansion on one instance")
    _add_config_flag(infer)
    infer.add_argument("--image")
    infer.add_argument("--modal-box", dest="modal_box",
                       help="x0,y0,x1,y1 half-open integers")
    infer.add_argument("--category")
    infer.add_argument("--backend",
                       help="null | oracle:<mask.png> | modal-copy | proc:<command>")
    infer.add_argument("--modal-backend", dest="modal_backend",
                       help="same spellings, or none (default)")
    infer.add_argument("--out")
    infer.add_argument("--expansion-threshold", type=float, dest="expansion_threshold")
    infer.add_argument("--margin-frac", type=float, dest="margin_frac")
    infer.add_argument("--amodal-mask-threshold", type=float, dest="amodal_mask_threshold")
    infer.add_argument("--modal-mask-threshold", type=float, dest="modal_mask_threshold")
    infer.add_argument("--max-iterations", type=int, dest="max_iterations")
    infer.add_argument("--modal-margin-frac", type=float, dest="modal_margin_frac")
    infer.add_argument("--timeout", type=float)
    infer.set_defaults(handler=cmd_infer)

    ev = sub.add_parser("eval", help="compute metric artifacts")
    ev_sub = ev.add_subparsers(dest="eval_command")

    occ = ev_sub.add_parser("occlusion", help="PR sweep over area ratios")
    _add_config_flag(occ)
    occ.add_argument("--samples", help="JSONL of area-ratio samples")
    occ.add_argument("--out")
    occ.add_argument("--bins", type=int)
    occ.set_defaults(handler=cmd_eval_occlusion)

    masks = ev_sub.add_parser("masks", help="accuracy over an IoU cutoff grid")
    _add_config_flag(masks)
    masks.add_argument("--ious", help="JSONL of IoUs or mask pairs")
    masks.add_argument("--out")
    masks.set_defaults(handler=cmd_eval_masks)

    detseg = ev_sub.add_parser("detseg", help="box-assigned mask-judged mAP")
    _add_config_flag(detseg)
    detseg.add_argument("--preds", help="JSONL of predictions")
    detseg.add_argument("--gts", help="JSONL of ground truths")
    detseg.add_argument("--cutoff", type=float)
    detseg.add_argument("--out")
    detseg.set_defaults(handler=cmd_eval_detseg)

    report = sub.add_parser("report", help="re-print headline numbers from artifacts")
    _add_config_flag(report)
    report.add_argument("--run", help="directory holding eval or infer artifacts")
    report.set_defaults(handler=cmd_report)

    return parser


if __name__ == "__main__":
    entrypoint()
