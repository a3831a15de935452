"""Batch command-line entry points for every engine capability.

Exit codes: 0 on success, 1 for validation problems (bad arguments,
missing or malformed files), 2 for unexpected runtime failures. All
subcommands produce byte-identical outputs for identical argv and --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import nifti
from .errors import EngineError
from .grid import BinaryMask, LabelVolume, Volume
from .labelspace import load_labelspace, remap_labels
from .metrics import EvalCase, evaluate_dataset, simulate_session, write_curve_csv
from .predictors import OraclePredictor, resolve_predictor
from .prompts import ClassPrompt
from .sliding import BlendKernel, binarize, sliding_window

PROG = "voxelforge"


class CliError(Exception):
    """Validation failure; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def _add_common(p: _Parser):
    p.add_argument("--seed", type=int, default=0, help="RNG seed for sampling steps")
    p.add_argument("--threads", type=int, default=1, help="worker threads for patch inference")
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file with defaults for this subcommand")
    p.add_argument("--dump-config", action="store_true",
                   help="print the resolved configuration as JSON and exit")


def build_parser() -> _Parser:
    parser = _Parser(prog=PROG, description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("supervoxel", help="partition a scan into supervoxels")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--n-segments", type=int, default=100)
    p.add_argument("--sigma", type=float, default=3.0)
    p.add_argument("--compactness", type=float, default=0.1)
    p.add_argument("--extractor", choices=["intensity", "gauss_pyramid"],
                   default="gauss_pyramid")
    p.add_argument("--max-iter", type=int, default=10)
    _add_common(p)

    p = sub.add_parser("segment", help="automatic class-prompt segmentation")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--class", dest="class_index", type=int, required=True)
    p.add_argument("--predictor", default="oracle")
    p.add_argument("--gt", type=Path, default=None, help="labels for the oracle predictor")
    p.add_argument("--patch", type=int, default=128)
    p.add_argument("--overlap", type=float, default=0.25)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--blend", choices=["constant", "gaussian"], default="gaussian")
    p.add_argument("--tolerance", type=float, default=50.0)
    _add_common(p)

    p = sub.add_parser("simulate", help="simulated click session producing a dice curve")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--class", dest="class_index", type=int, default=None,
                   help="class index in the gt labels; default: any nonzero voxel")
    p.add_argument("--max-clicks", type=int, default=10)
    p.add_argument("--predictor", default="oracle")
    p.add_argument("--patch", type=int, default=128)
    p.add_argument("--tolerance", type=float, default=50.0)
    _add_common(p)

    p = sub.add_parser("evaluate", help="per-class dice over a case manifest")
    p.add_argument("--cases", type=Path, required=True,
                   help='JSON manifest: [{"image": ..., "label": ..., "dataset": ...}]')
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--mode", choices=["auto", "point", "auto_point"], default="auto")
    p.add_argument("--classes", default=None, help="comma-separated global indices")
    p.add_argument("--predictor", default="oracle")
    p.add_argument("--labelspace", type=Path, default=None,
                   help="sidecar JSON for remapping dataset-local labels")
    p.add_argument("--csv", type=Path, default=None, help="also write per-case CSV rows")
    p.add_argument("--patch", type=int, default=128)
    p.add_argument("--overlap", type=float, default=0.25)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--tolerance", type=float, default=50.0)
    _add_common(p)

    p = sub.add_parser("remap", help="map dataset-local label indices to the global space")
    p.add_argument("input", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--labelspace", type=Path, required=True)
    p.add_argument("--dataset", required=True)
    _add_common(p)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--data-dir", type=Path, default=None)
    p.add_argument("--service-config", type=Path, default=None,
                   help="JSON file with full service settings")
    _add_common(p)

    p = sub.add_parser("convert", help="NIfTI <-> raw payload with JSON sidecar")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    _add_common(p)

    return parser


def _read_volume(path: Path) -> Volume:
    if not path.exists():
        raise CliError(f"input file not found: {path}")
    return nifti.read_nifti(path, as_labels=False)


def _read_labels(path: Path) -> LabelVolume:
    if not path.exists():
        raise CliError(f"label file not found: {path}")
    vol = nifti.read_nifti(path)
    if not isinstance(vol, LabelVolume):
        raise CliError(f"{path} holds float data, expected integer labels")
    return vol


def _resolved_config(args: argparse.Namespace) -> dict:
    skip = {"command", "dump_config", "config"}
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def cmd_supervoxel(args) -> int:
    from .supervoxel import builtin_extractor, slic3d, triaxial_features

    vol = _read_volume(args.input)
    feats = triaxial_features(vol, builtin_extractor(args.extractor))
    sv = slic3d(
        feats,
        n_segments=args.n_segments,
        compactness=args.compactness,
        sigma=args.sigma,
        max_iter=args.max_iter,
    )
    nifti.write_nifti(
        LabelVolume(sv.labels.astype(np.int32), vol.spacing, vol.origin), args.output
    )
    print(f"wrote {args.output} ({sv.n_segments_actual} supervoxels)")
    return 0


def _make_predictor(args, gt: LabelVolume | None):
    try:
        return resolve_predictor(args.predictor, gt=gt, tolerance=args.tolerance)
    except ValueError as e:
        raise CliError(str(e)) from e


def cmd_segment(args) -> int:
    vol = _read_volume(args.input)
    gt = _read_labels(args.gt) if args.gt else None
    pred = _make_predictor(args, gt)
    prob = sliding_window(
        vol,
        pred,
        ClassPrompt(args.class_index),
        patch_size=(args.patch,) * 3,
        overlap=args.overlap,
        blend=BlendKernel(args.blend),
        threads=args.threads,
    )
    mask = binarize(prob, args.threshold)
    nifti.write_nifti(
        LabelVolume(mask.data.astype(np.uint8), vol.spacing, vol.origin), args.output
    )
    print(f"wrote {args.output} ({mask.count} voxels)")
    return 0


def cmd_simulate(args) -> int:
    vol = _read_volume(args.input)
    labels = _read_labels(args.gt)
    if args.class_index is not None:
        gt = labels.class_mask(args.class_index)
    else:
        gt = BinaryMask(labels.data > 0)
    if not gt.data.any():
        raise CliError(f"ground truth {args.gt} has no foreground for the requested class")
    pred = _make_predictor(args, labels)
    curve = simulate_session(
        vol,
        gt,
        pred,
        max_clicks=args.max_clicks,
        rng=np.random.default_rng(args.seed),
        patch_size=(args.patch,) * 3,
    )
    class_name = str(args.class_index) if args.class_index is not None else "fg"
    write_curve_csv(args.output, curve.to_rows(args.input.stem, class_name))
    print(f"wrote {args.output} (final dice {curve.final_dice:.3f})")
    return 0


def _load_cases(args) -> list[EvalCase]:
    if not args.cases.exists():
        raise CliError(f"case manifest not found: {args.cases}")
    with open(args.cases, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    space = load_labelspace(args.labelspace) if args.labelspace else None
    cases = []
    for entry in manifest:
        image = _read_volume(Path(entry["image"]))
        label = _read_labels(Path(entry["label"]))
        if space is not None and entry.get("dataset"):
            label = remap_labels(label, space, entry["dataset"])
        cases.append(EvalCase(Path(entry["image"]).stem, image, label))
    return cases


def cmd_evaluate(args) -> int:
    cases = _load_cases(args)
    if args.classes:
        classes = [int(c) for c in args.classes.split(",")]
    else:
        classes = sorted({c for case in cases for c in case.label.present_classes()})
    if not classes:
        raise CliError("no classes to evaluate")
    if args.predictor == "oracle":
        pred = lambda case: OraclePredictor(case.label)  # noqa: E731
    else:
        pred = _make_predictor(args, None)
    report = evaluate_dataset(
        cases,
        pred,
        classes,
        mode=args.mode,
        patch_size=(args.patch,) * 3,
        overlap=args.overlap,
        threshold=args.threshold,
        seed=args.seed,
        threads=args.threads,
    )
    with open(args.output, "w", encoding="utf-8") as f:
        f.write(report.to_json())
    if args.csv:
        write_curve_csv(args.csv, report.rows)
    print(f"wrote {args.output} (mean dice {report.mean:.3f} over {len(classes)} classes)")
    return 0


def cmd_remap(args) -> int:
    labels = _read_labels(args.input)
    if not args.labelspace.exists():
        raise CliError(f"labelspace file not found: {args.labelspace}")
    space = load_labelspace(args.labelspace)
    out = remap_labels(labels, space, args.dataset)
    nifti.write_nifti(out, args.output)
    print(f"wrote {args.output}")
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceConfig, run_service

    config = ServiceConfig.load(
        str(args.service_config) if args.service_config else None,
        port=args.port,
        data_dir=args.data_dir,
    )
    run_service(config)
    return 0


def cmd_convert(args) -> int:
    src, dst = args.input, args.output
    if not src.exists() and not (src.suffix == ".raw" and src.with_suffix(".json").exists()):
        raise CliError(f"input file not found: {src}")
    if src.suffix in (".nii", ".gz") and dst.suffix == ".raw":
        vol = nifti.read_nifti(src)
        sidecar = {
            "dims": list(vol.dims),
            "spacing": list(vol.spacing),
            "origin": list(vol.origin),
            "dtype": vol.data.dtype.str,
        }
        dst.write_bytes(np.ascontiguousarray(vol.data).tobytes(order="F"))
        dst.with_suffix(".json").write_text(json.dumps(sidecar, indent=1))
        print(f"wrote {dst} + {dst.with_suffix('.json')}")
        return 0
    if src.suffix == ".raw" and dst.suffix == ".nii":
        sidecar_path = src.with_suffix(".json")
        if not sidecar_path.exists():
            raise CliError(f"sidecar not found: {sidecar_path}")
        sidecar = json.loads(sidecar_path.read_text())
        data = np.frombuffer(src.read_bytes(), dtype=np.dtype(sidecar["dtype"]))
        data = data.reshape(sidecar["dims"], order="F")
        if np.issubdtype(data.dtype, np.integer):
            vol = LabelVolume(data, tuple(sidecar["spacing"]), tuple(sidecar["origin"]))
        else:
            vol = Volume(data, tuple(sidecar["spacing"]), tuple(sidecar["origin"]))
        nifti.write_nifti(vol, dst)
        print(f"wrote {dst}")
        return 0
    raise CliError("convert needs <in.nii> <out.raw> or <in.raw> <out.nii>")


COMMANDS = {
    "supervoxel": cmd_supervoxel,
    "segment": cmd_segment,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "remap": cmd_remap,
    "serve": cmd_serve,
    "convert": cmd_convert,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        # a --config file provides per-subcommand defaults; explicit flags win
        if "--config" in argv:
            pre, _ = parser.parse_known_args(argv)
            if pre.config is not None:
                if not pre.config.exists():
                    raise CliError(f"config file not found: {pre.config}")
                defaults = json.loads(pre.config.read_text())
                for action in parser._subparsers._group_actions:
                    sub = action.choices.get(pre.command)
                    if sub is not None:
                        sub.set_defaults(**{
                            k: v for k, v in defaults.items()
                            if k not in ("command", "config", "dump_config")
                        })
        args = parser.parse_args(argv)
        if getattr(args, "dump_config", False):
            print(json.dumps(_resolved_config(args), indent=1, sort_keys=True))
            return 0
        return COMMANDS[args.command](args)
    except CliError as e:
        print(f"{PROG}: error: {e}", file=sys.stderr)
        return 1
    except (EngineError, ValueError) as e:
        print(f"{PROG}: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"{PROG}: error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 2
    except Exception as e:  # pragma: no cover - unexpected failure path
        print(f"{PROG}: unexpected failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
