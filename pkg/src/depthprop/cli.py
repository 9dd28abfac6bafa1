"""Command-line surface: synth, run, eval, keyframes.

Exit codes: 0 ok, 1 usage, 2 I/O, 3 validation. The DEPTHPROP_THREADS
environment variable caps how many manifests `eval` scores concurrently.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .codecs import CodecError
from .keyframe import KeyframePolicy
from .metrics import aggregate_dataset
from .pipeline import (RunConfig, ValidationError, eval_sequence, load_manifest,
                       run_sequence, simulate_keyframes, synthesize_sequence,
                       write_report)
from .synth import scene_from_dict

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_VALIDATION = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_policy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kf-alpha", type=float, default=0.2,
                   help="coverage base threshold (default 0.2)")
    p.add_argument("--kf-beta", type=float, default=0.15,
                   help="flow base threshold (default 0.15)")
    p.add_argument("--kf-gamma", type=float, default=0.1,
                   help="flow threshold offset (default 0.1)")
    p.add_argument("--kf-decay", type=float, default=0.9,
                   help="per-frame threshold decay (default 0.9)")
    p.add_argument("--kf-fixed", type=int, default=None, metavar="N",
                   help="use a fixed keyframe interval instead of the heuristic")


def _add_metric_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta1-form", choices=("ratio", "relative"), default="ratio")
    p.add_argument("--ssi", action="store_true",
                   help="also report scale/shift-invariant metric variants")
    p.add_argument("--align-domain", choices=("depth", "disparity"), default=None,
                   help="override the manifest's alignment domain")
    p.add_argument("--fb-alpha", type=float, default=0.01,
                   help="forward-backward check relative term")
    p.add_argument("--fb-beta", type=float, default=0.5,
                   help="forward-backward check absolute term (pixels)")


def _policy(args) -> KeyframePolicy:
    return KeyframePolicy(alpha=args.kf_alpha, beta=args.kf_beta,
                          gamma=args.kf_gamma, decay=args.kf_decay,
                          fixed_interval=args.kf_fixed)


def _config(args) -> RunConfig:
    return RunConfig(policy=_policy(args), seed=args.seed,
                     weights_path=getattr(args, "weights", None),
                     flow_mode=getattr(args, "flow_mode", "refined"),
                     delta1_form=args.delta1_form, ssi=args.ssi,
                     align_domain=args.align_domain,
                     fb_alpha=args.fb_alpha, fb_beta=args.fb_beta)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="depthprop",
                     description="Temporal depth propagation and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="render a synthetic scene to files")
    p_synth.add_argument("--scene", required=True, help="scene spec JSON")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--fps", type=float, default=30.0)

    p_run = sub.add_parser("run", help="propagate depth through a sequence")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--weights", default=None, help="weight snapshot to load")
    p_run.add_argument("--flow-mode", choices=("refined", "raw"), default="refined")
    _add_policy_flags(p_run)
    _add_metric_flags(p_run)

    p_eval = sub.add_parser("eval", help="score external predictions in a manifest")
    p_eval.add_argument("--manifest", required=True, action="append",
                        help="may be given multiple times; scored concurrently")
    p_eval.add_argument("--out", default=None, help="report output directory")
    p_eval.add_argument("--seed", type=int, default=0)
    _add_policy_flags(p_eval)
    _add_metric_flags(p_eval)

    p_kf = sub.add_parser("keyframes", help="simulate the keyframe policy over flows")
    p_kf.add_argument("--manifest", required=True)
    p_kf.add_argument("--out", default=None, help="report output directory")
    _add_policy_flags(p_kf)
    return parser


def _cmd_synth(args) -> int:
    scene_path = Path(args.scene)
    try:
        spec = scene_from_dict(json.loads(scene_path.read_text()))
    except json.JSONDecodeError as e:
        raise ValidationError(f"{scene_path}: invalid JSON: {e}") from None
    manifest_path = synthesize_sequence(spec, args.out, fps=args.fps)
    print(f"wrote {spec.num_frames} frames and {manifest_path}")
    return EXIT_OK


def _cmd_run(args) -> int:
    manifest = load_manifest(args.manifest)
    result = run_sequence(manifest, _config(args), out_dir=args.out)
    for rec in result.records:
        print(json.dumps(rec))
    return EXIT_OK


def _cmd_eval(args) -> int:
    manifests = [load_manifest(m) for m in args.manifest]
    config = _config(args)
    workers = int(os.environ.get("DEPTHPROP_THREADS", "0")) or min(len(manifests), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda m: eval_sequence(m, config), manifests))
    summaries = []
    for path, (_, summary, _, records) in zip(args.manifest, results):
        summaries.append(summary)
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            write_report(out / (Path(path).stem + "_report.jsonl"), records)
        for rec in records:
            print(json.dumps(rec))
    if len(summaries) > 1:
        ds = aggregate_dataset(summaries)
        print(json.dumps({"type": "dataset", "sequences": len(summaries),
                          "delta1": ds.delta1, "tau5": ds.tau5,
                          "delta1_ssi": ds.delta1_ssi, "tau5_ssi": ds.tau5_ssi}))
    return EXIT_OK


def _cmd_keyframes(args) -> int:
    manifest = load_manifest(args.manifest)
    _, records = simulate_keyframes(manifest, _policy(args))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_report(out / "keyframes.jsonl", records)
    for rec in records:
        print(json.dumps(rec))
    return EXIT_OK


_COMMANDS = {"synth": _cmd_synth, "run": _cmd_run, "eval": _cmd_eval,
             "keyframes": _cmd_keyframes}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, CodecError, ValueError) as e:
        print(f"depthprop: validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"depthprop: i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
