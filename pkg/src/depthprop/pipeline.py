"""Sequence ingestion, pipeline orchestration, and report emission.

A sequence is described by a JSON manifest listing per-frame files (RGB,
optional ground-truth depth, optional backward/forward flow, optional
injected keyframe state, optional external predictions) plus intrinsics
and fps. Processing is strictly online: frame t's outputs depend only on
frames <= t.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import codecs
from .camera import Intrinsics, unproject
from .keyframe import KeyframePolicy, interval_histogram, should_keyframe
from .losses import LossReport, consistency_loss, l1_ssi, si_log
from .metrics import (FrameMetrics, SequenceSummary, aggregate, delta1,
                      delta1_ssi, tau5, tau5_ssi)
from .propnet import (FrameState, PropWeights, load_weights, propagate_step,
                      seeded_weights, toy_base, zeroed)
from .synth import SceneSpec, render_depth, render_flow, render_rgb
from .warp import coverage, fb_consistency_mask, flow_mean_norm


class ValidationError(ValueError):
    """Manifest or input-content validation failure."""


@dataclass
class FrameRecord:
    rgb: str
    depth_gt: str | None = None
    flow_bwd: str | None = None
    flow_fwd: str | None = None
    keyframe_depth: str | None = None
    keyframe_features: str | None = None
    pred_depth: str | None = None


@dataclass
class SequenceManifest:
    frames: list[FrameRecord]
    intrinsics: Intrinsics
    fps: float
    alignment_domain: str = "depth"
    base_dir: Path = field(default_factory=Path)

    def path(self, rel: str) -> Path:
        return self.base_dir / rel


_FRAME_KEYS = ("rgb", "depth_gt", "flow_bwd", "flow_fwd",
               "keyframe_depth", "keyframe_features", "pred_depth")


def load_manifest(path) -> SequenceManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON: {e}") from None
    try:
        ki = doc["intrinsics"]
        intrinsics = Intrinsics(fx=float(ki["fx"]), fy=float(ki["fy"]),
                                cx=float(ki["cx"]), cy=float(ki["cy"]))
        fps = float(doc["fps"])
        frames_doc = doc["frames"]
    except KeyError as e:
        raise ValidationError(f"{path}: manifest missing field {e.args[0]!r}") from None
    domain = doc.get("alignment_domain", "depth")
    if domain not in ("depth", "disparity"):
        raise ValidationError(f"{path}: bad alignment_domain {domain!r}")
    if not frames_doc:
        raise ValidationError(f"{path}: manifest has no frames")
    frames = []
    for i, fd in enumerate(frames_doc):
        if "rgb" not in fd or fd["rgb"] is None:
            raise ValidationError(f"{path}: frame {i} has no rgb path")
        unknown = set(fd) - set(_FRAME_KEYS)
        if unknown:
            raise ValidationError(f"{path}: frame {i} has unknown keys {sorted(unknown)}")
        frames.append(FrameRecord(**{k: fd.get(k) for k in _FRAME_KEYS}))
    manifest = SequenceManifest(frames=frames, intrinsics=intrinsics, fps=fps,
                                alignment_domain=domain, base_dir=path.parent)
    for i, fr in enumerate(frames):
        for key in _FRAME_KEYS:
            rel = getattr(fr, key)
            if rel is not None and not manifest.path(rel).exists():
                raise ValidationError(f"{path}: frame {i} {key} file not found: {rel}")
        if (fr.keyframe_depth is None) != (fr.keyframe_features is None):
            raise ValidationError(
                f"{path}: frame {i} must inject both keyframe depth and features or neither")
    return manifest


def save_manifest(path, manifest: SequenceManifest) -> None:
    k = manifest.intrinsics
    doc = {
        "fps": manifest.fps,
        "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy},
        "alignment_domain": manifest.alignment_domain,
        "frames": [
            {key: getattr(fr, key) for key in _FRAME_KEYS if getattr(fr, key) is not None}
            for fr in manifest.frames
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


@dataclass
class RunConfig:
    policy: KeyframePolicy = field(default_factory=KeyframePolicy)
    seed: int = 0
    weights_path: str | None = None
    flow_mode: str = "refined"  # "raw" disables the learned flow correction
    delta1_form: str = "ratio"
    ssi: bool = False
    align_domain: str | None = None  # None: use the manifest's
    fb_alpha: float = 0.01
    fb_beta: float = 0.5


def _load_run_weights(config: RunConfig) -> PropWeights:
    w = load_weights(config.weights_path) if config.weights_path \
        else seeded_weights(config.seed)
    if config.flow_mode == "raw":
        w = replace(w, flow_refine=[zeroed(l) for l in w.flow_refine])
    elif config.flow_mode != "refined":
        raise ValidationError(f"unknown flow mode {config.flow_mode!r}")
    return w


def _read_rgb(manifest: SequenceManifest, fr: FrameRecord, i: int) -> np.ndarray:
    try:
        return codecs.u8_to_rgb(codecs.read_ppm(manifest.path(fr.rgb)))
    except (OSError, codecs.CodecError) as e:
        raise type(e)(f"frame {i}: {e}")


def _read_gt(manifest: SequenceManifest, fr: FrameRecord, i: int):
    if fr.depth_gt is None:
        return None, None
    try:
        gt = codecs.read_pfm(manifest.path(fr.depth_gt))
    except (OSError, codecs.CodecError) as e:
        raise type(e)(f"frame {i}: {e}")
    return gt, gt[:, :, 0] > 0


@dataclass
class RunResult:
    depths: list[np.ndarray]
    keyframe_flags: list[bool]
    refined_flows: list[np.ndarray | None]
    frame_metrics: list[FrameMetrics | None]
    summary: SequenceSummary | None
    records: list[dict]


def run_sequence(manifest: SequenceManifest, config: RunConfig,
                 out_dir=None) -> RunResult:
    """Propagate depth through a sequence under the configured keyframe policy.

    Frame 0 (and every policy-triggered keyframe) is initialized through the
    base pass or, where the manifest injects keyframe state, from files.
    Metrics against ground truth are attached wherever GT is present.
    """
    w = _load_run_weights(config)
    k = manifest.intrinsics
    domain = config.align_domain or manifest.alignment_domain
    depths: list[np.ndarray] = []
    flags: list[bool] = []
    flows: list[np.ndarray | None] = []
    per_frame: list[FrameMetrics | None] = []
    records: list[dict] = []

    state: FrameState | None = None
    prev_rgb = None
    prev_gt = None
    prev_gt_mask = None

    for i, fr in enumerate(manifest.frames):
        rgb = _read_rgb(manifest, fr, i)
        h, wd = rgb.shape[:2]
        flow = None
        cov = fn = None
        if i > 0:
            if fr.flow_bwd is None:
                raise ValidationError(f"frame {i}: flow_bwd required for propagation")
            try:
                flow = codecs.read_flo(manifest.path(fr.flow_bwd))
            except (OSError, codecs.CodecError) as e:
                raise type(e)(f"frame {i}: {e}")
            if flow.shape[:2] != (h, wd):
                raise ValidationError(
                    f"frame {i}: flow dims {flow.shape[:2]} do not match rgb {(h, wd)}")
            cov = coverage(flow)
            fn = flow_mean_norm(flow, wd, h)

        if i == 0:
            is_kf = True
        else:
            is_kf = should_keyframe(config.policy, cov, fn, state.frames_since_keyframe)

        if is_kf:
            injected = None
            if fr.keyframe_depth is not None:
                try:
                    inj_depth = codecs.read_pfm(manifest.path(fr.keyframe_depth))
                    inj_neck = codecs.read_pyramid(manifest.path(fr.keyframe_features))
                except (OSError, codecs.CodecError) as e:
                    raise type(e)(f"frame {i}: {e}")
                if inj_depth.shape[:2] != (h, wd):
                    raise ValidationError(f"frame {i}: injected depth dims mismatch")
                injected = (inj_neck, inj_depth)
            neck, depth = toy_base(rgb, w, injected=injected)
            state = FrameState(neck=neck, depth=depth, frames_since_keyframe=0,
                               intrinsics=k)
            flow_out = None
        else:
            state, depth, flow_out = propagate_step(state, rgb, prev_rgb, flow, w)

        gt, gt_mask = _read_gt(manifest, fr, i)
        fm = None
        if gt is not None:
            fm = _frame_metrics(manifest, config, i, depth, gt, gt_mask,
                                depths[-1] if depths else None, prev_gt, prev_gt_mask,
                                fr, flow, domain)
        depths.append(depth)
        flags.append(is_kf)
        flows.append(flow_out)
        per_frame.append(fm)
        rec = {"type": "frame", "frame": i, "keyframe": is_kf}
        if cov is not None:
            rec["coverage"] = cov
            rec["flow_norm"] = fn
        if fm is not None:
            rec.update(_metrics_dict(fm))
        records.append(rec)
        prev_rgb = rgb
        prev_gt, prev_gt_mask = gt, gt_mask

    scored = [m for m in per_frame if m is not None]
    summary = aggregate(scored) if scored else None
    records.append(_summary_record(summary, len(manifest.frames), sum(flags)))
    if out_dir is not None:
        _write_outputs(out_dir, depths, flows, records)
    return RunResult(depths=depths, keyframe_flags=flags, refined_flows=flows,
                     frame_metrics=per_frame, summary=summary, records=records)


def _frame_metrics(manifest, config, i, pred, gt, gt_mask, pred_prev, gt_prev,
                   gt_prev_mask, fr, flow, domain) -> FrameMetrics:
    d1 = delta1(pred, gt, gt_mask, form=config.delta1_form)
    d1s = delta1_ssi(pred, gt, gt_mask, form=config.delta1_form,
                     domain=domain) if config.ssi else None
    t5 = t5s = None
    if i > 0 and pred_prev is not None and flow is not None:
        mask = gt_mask.copy()
        if fr.flow_fwd is not None:
            try:
                fwd = codecs.read_flo(manifest.path(fr.flow_fwd))
            except (OSError, codecs.CodecError) as e:
                raise type(e)(f"frame {i}: {e}")
            mask &= fb_consistency_mask(flow, fwd, alpha=config.fb_alpha,
                                        beta=config.fb_beta)
        if mask.any():
            t5 = tau5(pred_prev, pred, flow, manifest.intrinsics, mask)
            if config.ssi and gt_prev is not None:
                t5s = tau5_ssi(pred_prev, gt_prev, pred, gt, flow,
                               manifest.intrinsics, mask, domain=domain,
                               mask_prev=gt_prev_mask)
    return FrameMetrics(delta1=d1, tau5=t5, valid_pixels=int(gt_mask.sum()),
                        delta1_ssi=d1s, tau5_ssi=t5s)


def _metrics_dict(fm: FrameMetrics) -> dict:
    out = {"delta1": fm.delta1, "tau5": fm.tau5, "valid_pixels": fm.valid_pixels}
    if fm.delta1_ssi is not None:
        out["delta1_ssi"] = fm.delta1_ssi
    if fm.tau5_ssi is not None:
        out["tau5_ssi"] = fm.tau5_ssi
    return out


def _summary_record(summary: SequenceSummary | None, frames: int, keyframes: int) -> dict:
    rec = {"type": "summary", "frames": frames, "keyframes": keyframes}
    if summary is not None:
        rec["delta1"] = summary.delta1
        rec["tau5"] = summary.tau5
        if summary.delta1_ssi is not None:
            rec["delta1_ssi"] = summary.delta1_ssi
        if summary.tau5_ssi is not None:
            rec["tau5_ssi"] = summary.tau5_ssi
    return rec


def _write_outputs(out_dir, depths, flows, records) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, d in enumerate(depths):
        codecs.write_pfm(out / f"depth_{i:05d}.pfm", d)
    for i, fl in enumerate(flows):
        if fl is not None:
            codecs.write_flo(out / f"flow_{i:05d}.flo", fl)
    write_report(out / "report.jsonl", records)


def write_report(path, records: list[dict]) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# Evaluation of external predictions.

def eval_sequence(manifest: SequenceManifest, config: RunConfig
                  ) -> tuple[list[FrameMetrics], SequenceSummary, LossReport, list[dict]]:
    """Score a manifest whose frames carry external depth predictions."""
    missing = [i for i, fr in enumerate(manifest.frames) if fr.pred_depth is None]
    if missing:
        raise ValidationError(f"predictions missing for frames {missing}")
    missing_gt = [i for i, fr in enumerate(manifest.frames) if fr.depth_gt is None]
    if missing_gt:
        raise ValidationError(f"ground truth missing for frames {missing_gt}")
    domain = config.align_domain or manifest.alignment_domain
    k = manifest.intrinsics

    preds, gts, masks = [], [], []
    for i, fr in enumerate(manifest.frames):
        try:
            preds.append(codecs.read_pfm(manifest.path(fr.pred_depth)))
        except (OSError, codecs.CodecError) as e:
            raise type(e)(f"frame {i}: {e}")
        gt, gt_mask = _read_gt(manifest, fr, i)
        gts.append(gt)
        masks.append(gt_mask)

    per_frame: list[FrameMetrics] = []
    records: list[dict] = []
    si_vals, con_vals = [], []
    for i, fr in enumerate(manifest.frames):
        d1 = delta1(preds[i], gts[i], masks[i], form=config.delta1_form)
        d1s = delta1_ssi(preds[i], gts[i], masks[i], form=config.delta1_form,
                         domain=domain) if config.ssi else None
        t5 = t5s = None
        if i > 0 and fr.flow_bwd is not None:
            flow = codecs.read_flo(manifest.path(fr.flow_bwd))
            mask = masks[i].copy()
            if fr.flow_fwd is not None:
                fwd = codecs.read_flo(manifest.path(fr.flow_fwd))
                mask &= fb_consistency_mask(flow, fwd, alpha=config.fb_alpha,
                                            beta=config.fb_beta)
            if mask.any():
                t5 = tau5(preds[i - 1], preds[i], flow, k, mask)
                if config.ssi:
                    t5s = tau5_ssi(preds[i - 1], gts[i - 1], preds[i], gts[i],
                                   flow, k, mask, domain=domain,
                                   mask_prev=masks[i - 1])
                con_vals.append(consistency_loss(
                    unproject(np.asarray(preds[i - 1], dtype=np.float64), k),
                    unproject(np.asarray(preds[i], dtype=np.float64), k),
                    flow, mask))
        si_vals.append(si_log(gts[i], preds[i], masks[i]))
        fm = FrameMetrics(delta1=d1, tau5=t5, valid_pixels=int(masks[i].sum()),
                          delta1_ssi=d1s, tau5_ssi=t5s)
        per_frame.append(fm)
        records.append({"type": "frame", "frame": i, **_metrics_dict(fm)})

    summary = aggregate(per_frame)
    diagnostics = LossReport(
        si_log=float(np.mean(si_vals)),
        l1_ssi=l1_ssi(gts, preds, masks),
        consistency=float(np.mean(con_vals)) if con_vals else None,
        valid_pixel_count=int(sum(m.sum() for m in masks)),
    )
    rec = _summary_record(summary, len(manifest.frames), 0)
    rec["si_log"] = diagnostics.si_log
    rec["l1_ssi"] = diagnostics.l1_ssi
    if diagnostics.consistency is not None:
        rec["consistency"] = diagnostics.consistency
    records.append(rec)
    return per_frame, summary, diagnostics, records


# ---------------------------------------------------------------------------
# Keyframe policy simulation.

def simulate_keyframes(manifest: SequenceManifest, policy: KeyframePolicy
                       ) -> tuple[list[int], list[dict]]:
    """Run only the keyframe decision over a manifest's flows."""
    events = [0]
    records = [{"type": "frame", "frame": 0, "keyframe": True}]
    t = 0
    for i, fr in enumerate(manifest.frames[1:], start=1):
        if fr.flow_bwd is None:
            raise ValidationError(f"frame {i}: flow_bwd required for keyframe simulation")
        flow = codecs.read_flo(manifest.path(fr.flow_bwd))
        h, wd = flow.shape[:2]
        cov = coverage(flow)
        fn = flow_mean_norm(flow, wd, h)
        kf = should_keyframe(policy, cov, fn, t)
        if kf:
            events.append(i)
            t = 0
        else:
            t += 1
        records.append({"type": "frame", "frame": i, "keyframe": kf,
                        "coverage": cov, "flow_norm": fn})
    stats = interval_histogram(events, manifest.fps)
    records.append({"type": "summary", "events": events,
                    "mean_interval_s": stats.mean,
                    "histogram": {f"{k:.3f}": v for k, v in stats.histogram.items()},
                    "bucket_width_s": stats.bucket_width})
    return events, records


# ---------------------------------------------------------------------------
# Synthetic sequence emission.

def synthesize_sequence(spec: SceneSpec, out_dir, fps: float = 30.0) -> Path:
    """Render a scene to PPM/PFM/.flo files plus a manifest; returns its path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames = []
    for t in range(spec.num_frames):
        rgb_name = f"rgb_{t:05d}.ppm"
        depth_name = f"depth_{t:05d}.pfm"
        codecs.write_ppm(out / rgb_name, codecs.rgb_to_u8(render_rgb(spec, t)))
        depth, valid = render_depth(spec, t)
        codecs.write_pfm(out / depth_name, np.where(valid[:, :, None], depth, 0.0))
        fr = FrameRecord(rgb=rgb_name, depth_gt=depth_name)
        if t > 0:
            bwd, _ = render_flow(spec, t - 1, t)
            fwd, _ = render_flow(spec, t, t - 1)
            fr.flow_bwd = f"flow_bwd_{t:05d}.flo"
            fr.flow_fwd = f"flow_fwd_{t:05d}.flo"
            codecs.write_flo(out / fr.flow_bwd, bwd)
            codecs.write_flo(out / fr.flow_fwd, fwd)
        frames.append(fr)
    manifest = SequenceManifest(frames=frames, intrinsics=spec.intrinsics,
                                fps=fps, base_dir=out)
    manifest_path = out / "manifest.json"
    save_manifest(manifest_path, manifest)
    return manifest_path
