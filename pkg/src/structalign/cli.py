"""Command-line surface: gen / train / predict / align / eval.

Control-plane data (point lists, manifests) is JSON; bulk arrays live in the
FSEQ1/CSM1/DCNN1 binary formats. Data goes to declared output files only;
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import align as align_mod
from . import features as feat_mod
from . import ingest, neural, simgrid, structgen
from . import evaluate as eval_mod
from .structgen import PlanConfig, Segment, StructurePlan

DEFAULT_SEED = 42


def _log(*args) -> None:
    print(*args, file=sys.stderr)


def load_features(path: str) -> feat_mod.FeatureSequence:
    """Load chroma from .fseq, or derive it from .mid/.midi or .wav input."""
    suffix = Path(path).suffix.lower()
    if suffix == ".fseq":
        return feat_mod.load_fseq(path)
    data = Path(path).read_bytes()
    if suffix in (".mid", ".midi"):
        roll = ingest.midi_to_piano_roll(ingest.parse_midi(data))
        return feat_mod.chroma_from_piano_roll(roll)
    if suffix == ".wav":
        return feat_mod.chroma_from_audio(ingest.read_wav(data))
    raise ValueError(f"unsupported input type: {path}")


def _load_points(path: str) -> neural.InflectionPointList:
    with open(path) as f:
        payload = json.load(f)
    points = payload["points"] if isinstance(payload, dict) else payload
    return neural.InflectionPointList([(int(a), int(b)) for a, b in points])


def _plan_from_record(record: dict) -> StructurePlan:
    return StructurePlan([Segment(s, e, t) for s, e, t in record["segments"]])


def cmd_gen(args) -> int:
    out_dir = Path(args.out_dir)
    (out_dir / "pieces").mkdir(parents=True, exist_ok=True)
    (out_dir / "samples").mkdir(parents=True, exist_ok=True)

    scores, beat_lists = [], []
    for i in range(args.pieces):
        midi = structgen.random_score(args.seed * 7919 + i, num_notes=args.score_notes)
        scores.append(structgen.score_features(midi))
        beat_lists.append(midi.beat_times)
    samples = structgen.build_dataset(
        scores,
        variants_per_piece=args.variants,
        seed=args.seed,
        noise_std=args.noise_std,
        input_size=args.input_size,
        plan_config=PlanConfig(jump_prob=args.jump_prob),
        keep_sequences=True,
    )

    piece_paths = []
    for i, score in enumerate(scores):
        path = out_dir / "pieces" / f"piece_{i:03d}.fseq"
        feat_mod.save_fseq(path, score)
        piece_paths.append(str(path))

    manifest = out_dir / "manifest.jsonl"
    with open(manifest, "w") as f:
        for k, s in enumerate(samples):
            perf_path = out_dir / "samples" / f"sample_{k:04d}_perf.fseq"
            csm_path = out_dir / "samples" / f"sample_{k:04d}.csm"
            feat_mod.save_fseq(perf_path, s.performance)
            csm = simgrid.cross_similarity(s.performance, s.score)
            simgrid.save_csm(csm_path, csm)
            record = {
                "id": k,
                "piece": s.piece_index,
                "variant": s.variant,
                "split": s.split,
                "score_fseq": piece_paths[s.piece_index],
                "perf_fseq": str(perf_path),
                "csm": str(csm_path),
                "target": [float(v) for v in s.target],
                "segments": [
                    [seg.score_start, seg.score_end, seg.tempo_factor]
                    for seg in s.plan.segments
                ],
                "score_beats": beat_lists[s.piece_index],
                "perf_rate": s.performance.frame_rate_hz,
                "score_rate": s.score.frame_rate_hz,
            }
            f.write(json.dumps(record) + "\n")
    _log(f"wrote {len(samples)} samples to {manifest}")
    return 0


def _read_manifest(path: str) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def cmd_train(args) -> int:
    records = _read_manifest(args.manifest)
    d2, d3 = (int(v) for v in args.dilations.split(","))
    config = neural.ModelConfig(
        input_size=args.input_size, dilation_layer2=d2, dilation_layer3=d3)

    def grid_of(rec):
        csm = simgrid.load_csm(rec["csm"])
        return simgrid.to_network_input(csm, args.input_size).values

    train_set = [(grid_of(r), np.array(r["target"])) for r in records
                 if r["split"] == "train"]
    val_set = [(grid_of(r), np.array(r["target"])) for r in records
               if r["split"] == "val"]
    if not val_set:
        val_set = train_set
    model = neural.AlignmentNet(config, seed=args.seed)
    result = neural.train(model, train_set, val_set, neural.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.lr, patience=args.patience, seed=args.seed))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    neural.save_checkpoint(out_dir / "checkpoint.dcnn", result.model, {
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
    })
    with open(out_dir / "train_log.csv", "w") as f:
        f.write("epoch,train_loss,val_loss\n")
        for epoch, tl, vl in result.history:
            f.write(f"{epoch},{tl:.8g},{vl:.8g}\n")
    if result.history:
        from .figures import render_training_figure

        render_training_figure(out_dir / "loss_curve.png", result.history)
    _log(f"{config.name}: best val loss {result.best_val_loss:.6g} "
         f"at epoch {result.best_epoch}")
    return 0


def _predict_points(checkpoint: str, performance, score, merge_epsilon: float):
    model, _ = neural.load_checkpoint(checkpoint)
    csm = simgrid.cross_similarity(performance, score)
    grid = simgrid.to_network_input(csm, model.config.input_size)
    output = model.predict(grid)
    return neural.decode_predictions(
        output, len(performance), len(score), merge_epsilon), csm


def cmd_predict(args) -> int:
    performance = load_features(args.performance)
    score = load_features(args.score)
    points, _ = _predict_points(args.checkpoint, performance, score, args.merge_epsilon)
    payload = {
        "points": [[a, b] for a, b in points.points],
        "performance_frames": len(performance),
        "score_frames": len(score),
    }
    with open(args.out, "w") as f:
        json.dump(payload, f, indent=2)
    _log(f"predicted {len(points)} inflection points -> {args.out}")
    return 0


def cmd_align(args) -> int:
    if args.csm:
        csm = simgrid.load_csm(args.csm)
    else:
        if not (args.performance and args.score):
            raise ValueError("provide --csm or both --performance and --score")
        csm = simgrid.cross_similarity(
            load_features(args.performance), load_features(args.score))

    if args.engine == "dtw":
        path = align_mod.dtw(csm)
    elif args.engine == "jumpdtw":
        points = (_load_points(args.points) if args.points
                  else neural.InflectionPointList([]))
        path = align_mod.jump_dtw(csm, points)
    else:
        path = align_mod.nwtw_align(csm, align_mod.NWTWParams(args.gamma))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    align_mod.save_path_csv(out_dir / "path.csv", path)
    align_mod.path_overlay_pgm(out_dir / "path.pgm", csm, path)
    from .figures import render_path_figure

    render_path_figure(out_dir / "path.png", csm, path, title=args.engine)
    _log(f"{args.engine}: cost {path.total_cost:.4f}, "
         f"{len(path.jump_positions)} jumps -> {out_dir}")
    return 0


def cmd_eval(args) -> int:
    records = _read_manifest(args.manifest)
    if args.split != "all":
        records = [r for r in records if r["split"] == args.split]
    if args.deviating_only:
        records = [r for r in records if len(r["segments"]) > 1]
    if not records:
        raise ValueError("no manifest records match the requested split")
    engines = args.engines.split(",")
    thresholds = tuple(int(t) for t in args.thresholds.split(","))

    per_engine: dict[str, list] = {e: [] for e in engines}
    for rec in records:
        csm = simgrid.load_csm(rec["csm"])
        plan = _plan_from_record(rec)
        warp = plan.warp_map()
        truth = eval_mod.beats_from_warpmap(
            warp, rec["score_beats"], rec["perf_rate"], rec["score_rate"])
        points = neural.InflectionPointList([])
        if "jumpdtw" in engines:
            if args.points_source == "oracle":
                points = plan.inflection_points()
            else:
                performance = feat_mod.load_fseq(rec["perf_fseq"])
                score = feat_mod.load_fseq(rec["score_fseq"])
                points, _ = _predict_points(
                    args.checkpoint, performance, score, args.merge_epsilon)
        for engine in engines:
            if engine == "dtw":
                path = align_mod.dtw(csm)
            elif engine == "jumpdtw":
                path = align_mod.jump_dtw(csm, points)
            elif engine == "nwtw":
                path = align_mod.nwtw_align(csm, align_mod.NWTWParams(args.gamma))
            else:
                raise ValueError(f"unknown engine {engine}")
            per_engine[engine].append(eval_mod.accuracy(
                path, truth, rec["perf_rate"], rec["score_rate"], thresholds, engine))

    reports = [eval_mod.merge_reports(per_engine[e], e) for e in sorted(engines)]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    eval_mod.reports_to_csv(out_dir / "report.csv", reports)
    table = eval_mod.reports_table(reports)
    (out_dir / "report.txt").write_text(table + "\n")
    from .figures import render_accuracy_figure

    render_accuracy_figure(out_dir / "report.png", reports)
    _log(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="structalign",
        description="Structure-aware alignment of music performances to scores.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="build a synthetic dataset with ground truth")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--pieces", type=int, default=20)
    p.add_argument("--variants", type=int, default=5)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--score-notes", type=int, default=48)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--jump-prob", type=float, default=0.0)
    p.add_argument("--input-size", type=int, default=simgrid.DEFAULT_INPUT_SIZE)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the dilated CNN from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--input-size", type=int, default=simgrid.DEFAULT_INPUT_SIZE)
    p.add_argument("--dilations", default="2,3", metavar="M,N")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict inflection points for a pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--performance", required=True)
    p.add_argument("--score", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--merge-epsilon", type=float, default=0.02)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("align", help="align one performance/score pair")
    p.add_argument("--engine", choices=["dtw", "jumpdtw", "nwtw"], default="dtw")
    p.add_argument("--performance")
    p.add_argument("--score")
    p.add_argument("--csm", help="precomputed CSM1 file (overrides fseq inputs)")
    p.add_argument("--points", help="JSON inflection point list for jumpdtw")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval", help="beat-accuracy comparison over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", choices=["train", "val", "all"], default="all")
    p.add_argument("--deviating-only", action="store_true",
                   help="keep only pieces with structural deviations")
    p.add_argument("--engines", default="dtw,jumpdtw,nwtw")
    p.add_argument("--points-source", choices=["oracle", "checkpoint"],
                   default="oracle")
    p.add_argument("--checkpoint")
    p.add_argument("--merge-epsilon", type=float, default=0.05)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--thresholds", default="25,50,100,200")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # runtime failure -> exit 1, message on stderr
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
