"""Command-line entry point: ``ssmcond <command> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .config import ModelConfig, env_seed


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _model_config(path: str | None) -> ModelConfig:
    data = {}
    if path:
        with open(path) as fh:
            data = json.load(fh)
    cfg = ModelConfig.from_dict(data)
    return cfg.replace(seed=env_seed(cfg.seed))


# --- commands ------------------------------------------------------------------------

def cmd_mel(args) -> int:
    from .frontend import compute_mel, load_wav
    from .numerics.tensorio import write_tensor

    write_tensor(compute_mel(load_wav(args.wav)), args.out)
    return 0


def cmd_condition(args) -> int:
    from .frontend import parse_tokens
    from .model import condition, load_conditioning
    from .numerics.tensorio import read_tensor, write_tensor

    params, _ = load_conditioning(args.ckpt)
    with open(args.tokens) as fh:
        ids = parse_tokens(fh.read())
    mel = read_tensor(args.refmel).astype(np.float64)
    cond, _ = condition(params, ids, mel)
    write_tensor(np.asarray(cond.packed), args.out)
    return 0


def cmd_stream(args) -> int:
    from .frontend import style_embed
    from .model import load_conditioning
    from .numerics.tensorio import read_tensor
    from .streaming import CausalEncoderParams, open_session, read_frames, write_frames

    params, _ = load_conditioning(args.ckpt)
    style = None
    if args.refmel:
        style = np.asarray(style_embed(read_tensor(args.refmel).astype(np.float64), params.style))
    enc = CausalEncoderParams.from_text_encoder(params.text)
    session = open_session(enc, args.lookahead_sec, style)
    src, dst = sys.stdin.buffer, sys.stdout.buffer
    while True:
        chunk = read_frames(src, enc.d_in)
        if chunk is None:
            break
        write_frames(dst, session.feed(chunk))
        dst.flush()
    write_frames(dst, session.close())
    dst.flush()
    return 0


def cmd_bench(args) -> int:
    from .bench import harness

    cfg = _model_config(args.config)
    seed = env_seed(args.seed)
    if args.kind == "breakdown":
        n_frames = args.T[0] if args.T else 1024
        report = harness.bench_breakdown(cfg, args.tokens or n_frames, n_frames, args.repeats, seed)
        rows = [[r["module"], repr(r["median_s"]), f"{r['percent']:.3f}", r["elements"]] for r in report.rows()]
        for line in report.warnings:
            print(f"warning: {line}", file=sys.stderr)
        _emit(_csv(["module", "median_s", "percent", "elements"], rows), args.out)
        return 0
    if args.kind == "scaling":
        lengths = args.T or [4096, 8192, 16384]
        report = harness.bench_scaling(cfg, lengths, args.repeats, seed)
        rows = [[r.n_frames, repr(r.best_s), repr(r.median_s), r.elements] for r in report.rows]
        _emit(_csv(["T", "best_s", "median_s", "elements"], rows), args.out)
        for ratio, ok in zip(report.ratios(), report.pair_passes()):
            print(f"ratio {ratio:.3f} {'PASS' if ok else 'FAIL'}", file=sys.stderr)
        for line in report.diagnosis():
            print(line, file=sys.stderr)
        return 0 if report.passed else 1
    lengths = args.T or [1000, 100000]
    rows = harness.audit_memory(cfg, lengths, args.mode, args.lookahead, seed=seed)
    _emit(_csv(["T", "peak", "baseline"], [[r.n_frames, r.peak, r.baseline] for r in rows]), args.out)
    return 0


def cmd_sweep(args) -> int:
    from .bench.sweep import DEFAULT_GRID, all_finite, rows_to_csv, runtime_monotone_in_d_ssm, sweep

    grid = DEFAULT_GRID
    if args.grid:
        with open(args.grid) as fh:
            grid = json.load(fh)
    rows = sweep(grid, n_frames=args.frames, seed=env_seed(args.seed))
    _emit(rows_to_csv(rows), args.out)
    problems = runtime_monotone_in_d_ssm(rows)
    for line in problems:
        print(f"non-monotone runtime: {line}", file=sys.stderr)
    return 0 if all_finite(rows) and not problems else 1


def cmd_gate_stats(args) -> int:
    from .bench.harness import gate_stats
    from .dynamics.data import load_dataset
    from .encoders import text_encode
    from .frontend import embed_tokens, style_embed
    from .model import load_conditioning

    params, _ = load_conditioning(args.ckpt)
    traces = []
    for sample in load_dataset(args.corpus):
        e = style_embed(sample.mel, params.style)
        _, gates = text_encode(embed_tokens(sample.ids, params.embedding), e, params.text)
        traces.append(np.asarray(gates))
    _emit(json.dumps(gate_stats(traces), indent=1, sort_keys=True) + "\n", args.out)
    return 0


def cmd_train_toy(args) -> int:
    from .dynamics.data import load_dataset, make_synthetic_dataset
    from .dynamics.losses import LossWeights
    from .dynamics.train import TrainConfig, train

    conf = {}
    if args.config:
        with open(args.config) as fh:
            conf = json.load(fh)
    model_cfg = ModelConfig.from_dict(conf.get("model", {}))
    train_cfg = TrainConfig.from_dict({"lr": 3e-3, "seed": 7, **conf.get("train", {})})
    seed = env_seed(train_cfg.seed)
    train_cfg = TrainConfig.from_dict({**train_cfg.__dict__, "seed": seed})
    model_cfg = model_cfg.replace(seed=seed)
    data = conf.get("dataset", {})
    if "path" in data:
        dataset = load_dataset(data["path"])
    else:
        dataset = make_synthetic_dataset(data.get("n", 4), seed=data.get("seed", 7), vocab=model_cfg.vocab)
    weights = LossWeights(**conf.get("loss", {}))
    out_dir = args.out_dir or conf.get("out_dir")
    result = train(dataset, train_cfg, weights, model_cfg, out_dir=out_dir)
    rows = [[r["step"], repr(r["loss"]), repr(r["lr"]), repr(r["grad_norm"])] for r in result.log]
    _emit(_csv(["step", "loss", "lr", "grad_norm"], rows), args.out)
    return 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import passed, run_all

    rows, ok = [], True
    for case, result in run_all(seed=env_seed(args.seed)):
        good = passed(case, result)
        ok &= good
        rows.append([case.name, repr(result.max_rel_error), case.tolerance, "PASS" if good else "FAIL"])
    _emit(_csv(["check", "max_rel_error", "tolerance", "status"], rows), args.out)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssmcond", description="SSM conditioning engine tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mel", help="log-mel spectrogram of a 24 kHz mono 16-bit WAV")
    p.add_argument("wav")
    p.add_argument("out")
    p.set_defaults(func=cmd_mel)

    p = sub.add_parser("condition", help="conditioning sequence from tokens and a reference mel")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--tokens", required=True, help="text file of whitespace-separated phoneme ids")
    p.add_argument("--refmel", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_condition)

    p = sub.add_parser("stream", help="framed f32 chunks on stdin, released frames on stdout")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--lookahead-sec", type=float, default=0.5)
    p.add_argument("--refmel", help="reference mel for the style vector (default: zero style)")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("bench", help="runtime breakdown, scaling or memory audit")
    p.add_argument("kind", choices=["breakdown", "scaling", "memory"])
    p.add_argument("--T", type=int, nargs="+")
    p.add_argument("--tokens", type=int, help="token count for breakdown (default: T)")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--mode", choices=["offline", "stream"], default="stream")
    p.add_argument("--lookahead", type=int, default=47, help="stream look-ahead in frames")
    p.add_argument("--config", help="model config JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="d_ssm x k x tau sensitivity grid")
    p.add_argument("--grid", help="JSON object of axis -> values")
    p.add_argument("--frames", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gate-stats", help="text-encoder gate means over a dataset directory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gate_stats)

    p = sub.add_parser("train-toy", help="short training run on synthetic glide tones")
    p.add_argument("--config", help="JSON with optional model/train/dataset/loss sections")
    p.add_argument("--out-dir", help="directory for loss.csv and the checkpoint")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("gradcheck", help="finite-difference checks at micro shapes")
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"ssmcond: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
