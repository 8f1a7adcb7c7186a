"""Command-line entry point: hybrid-dynamics <command> [options].

Exit codes: 0 success, 1 tolerance or verification failure, 2 usage or
configuration error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import gradcheck
from .config import RunConfig, load_config, with_overrides
from .data import Corpus, Excitation, fit_norm_stats, generate_corpus, load_corpus, split_corpus, write_corpus
from .errors import ConfigError, ConvergenceError, DivergenceError, ShapeError, VaSyntaxError
from .metrics import nrmse_per_waveform
from .models import KINDS, predict
from .training import initial_params, train
from .veriloga import export_veriloga, roundtrip_verify
from .waveform import Waveform
from .weights import WeightFile, load_weights, save_weights

EXIT_OK, EXIT_TOLERANCE, EXIT_USAGE, EXIT_DIVERGENCE = 0, 1, 2, 3


def _dump(path: Path, data) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def _default_manifest(args) -> Path:
    return Path(args.manifest) if args.manifest else Path(args.out) / "corpus" / "manifest.json"


def cmd_generate_data(cfg: RunConfig, args) -> int:
    waveforms = generate_corpus(cfg.corpus)
    train_set, test_set = split_corpus(waveforms, cfg.split.split_ratio, cfg.seed)
    stats = fit_norm_stats(train_set, cfg.split.time_scale)
    info = {**cfg.corpus.to_dict(), "split_ratio": cfg.split.split_ratio}
    path = write_corpus(Path(args.out) / "corpus", Corpus(train_set, test_set, stats, info))
    print(f"corpus: {len(waveforms)} waveforms, {len(train_set)} train / {len(test_set)} test")
    print(f"manifest: {path}")
    return EXIT_OK


def _write_history(path: Path, history):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mse", "test_nrmse", "best_test_nrmse"])
        for row in history:
            writer.writerow([row["epoch"]] + [repr(row.get(k, float("nan")))
                                              for k in ("train_mse", "test_nrmse", "best_test_nrmse")])


def cmd_train(cfg: RunConfig, args) -> int:
    corpus = load_corpus(_default_manifest(args))
    train_set, test_set = corpus.normalized()
    start = initial_params(cfg.model, cfg.training)
    result = train(cfg.training, cfg.model, train_set, test_set, params=start)
    if np.array_equal(result.params.flatten(), start.flatten()):
        print("warning: parameters unchanged by training (is the learning rate 0?)", file=sys.stderr)
    final = result.history[-1].get("test_nrmse", float("nan"))
    out = Path(args.out) / cfg.model.kind.lower()
    info = {"config": cfg.training.to_dict(), "epochs_run": len(result.history),
            "final_test_nrmse": final, "seed": cfg.seed}
    wpath = save_weights(out / "weights.json", WeightFile(cfg.model, result.params, corpus.stats, info))
    hpath = out / "history.csv"
    _write_history(hpath, result.history)
    print(f"{cfg.model.kind}: final test NRMSE x1e2 = {100.0 * final:.4f}")
    print(f"weights: {wpath}")
    print(f"history: {hpath}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    wf = load_weights(args.weights)
    corpus = load_corpus(_default_manifest(args))
    waveforms = corpus.train if args.split == "train" else corpus.test
    if waveforms and waveforms[0].u.shape[1] != wf.model.input_dim:
        raise ShapeError(f"weights expect {wf.model.input_dim} input channels, corpus has {waveforms[0].u.shape[1]}")
    # the weights carry the statistics they were trained with
    normed = [wf.stats.apply(w) for w in waveforms]
    outputs = predict(wf.model, wf.params, normed, cfg.solver.substeps)
    scores = nrmse_per_waveform(outputs, [w.y[1:] for w in normed])
    mean = float(np.mean(scores))
    metrics = {"kind": wf.model.kind, "split": args.split, "nrmse": mean, "nrmse_x100": 100.0 * mean,
               "per_waveform": {w.id: s for w, s in zip(waveforms, scores)}}
    path = _dump(Path(args.out) / f"metrics-{wf.model.kind.lower()}-{args.split}.json", metrics)
    print(f"{wf.model.kind} {args.split} NRMSE x1e2 = {100.0 * mean:.4f}")
    print(f"metrics: {path}")
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    report = gradcheck.run_suite(cfg.gradcheck)
    path = _dump(Path(args.out) / "gradcheck.json", report)
    worst = report["worst"]
    print(f"fd vs discrete (worst):      {worst['fd_vs_discrete']:.3e}")
    print(f"adjoint vs discrete (worst): {worst['adjoint_vs_discrete']:.3e}")
    print(f"substep doubling ratio (min): {worst['doubling_ratio']:.2f}")
    print(f"report: {path}")
    if not report["passed"]:
        print("FAILED groups: " + ", ".join(report["failed_groups"]), file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


def _trained_hybrid(path) -> WeightFile:
    wf = load_weights(path)
    if not wf.model.is_hybrid:
        raise ConfigError(f"export supports NODE-RNN and NCDE-RNN weights only, got {wf.model.kind}")
    if not wf.trained:
        raise ConfigError(f"{path}: weights carry no training record")
    return wf


def cmd_export(cfg: RunConfig, args) -> int:
    wf = _trained_hybrid(args.weights)
    text = export_veriloga(wf.model, wf.params, wf.stats, cfg.export.module_name)
    path = Path(args.out) / f"{(cfg.export.module_name or wf.model.kind.lower().replace('-', '_'))}.va"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    print(f"verilog-a: {path}")
    return EXIT_OK


def default_excitation(cfg: RunConfig) -> Waveform:
    ex = cfg.export
    period = 1.0 / ex.frequency
    t = np.linspace(0.0, period, ex.samples)
    u = Excitation(ex.amplitude, ex.frequency)(t)
    return Waveform("excitation", t, u, np.zeros_like(t))


def cmd_verify_export(cfg: RunConfig, args) -> int:
    wf = _trained_hybrid(args.weights)
    excitation = default_excitation(cfg)
    step = args.timestep or (1.0 / cfg.export.frequency) / cfg.export.timestep_divisor
    report = roundtrip_verify(wf.model, wf.params, wf.stats, excitation, step, cfg.solver.substeps,
                              training_nrmse=wf.training.get("final_test_nrmse"))
    report["nrmse_ceiling"] = cfg.export.nrmse_ceiling
    report["passed"] = report["nrmse"] <= cfg.export.nrmse_ceiling
    path = _dump(Path(args.out) / f"verify-{wf.model.kind.lower()}.json", report)
    print(f"round-trip NRMSE = {report['nrmse']:.3e} (ceiling {cfg.export.nrmse_ceiling:.1e}), "
          f"max abs error = {report['max_abs_error']:.3e}, steps = {report['steps']}")
    print(f"report: {path}")
    return EXIT_OK if report["passed"] else EXIT_TOLERANCE


COMMANDS = {
    "generate-data": cmd_generate_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "export": cmd_export,
    "verify-export": cmd_verify_export,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed for splits, initialization and checks")
    common.add_argument("--threads", type=int, help="worker threads for gradient batches")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(prog="hybrid-dynamics", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    sub.add_parser("generate-data", parents=[common], help="simulate and write the waveform corpus")

    p = sub.add_parser("train", parents=[common], help="train one model kind")
    p.add_argument("--kind", choices=KINDS, help="model kind (default from config)")
    p.add_argument("--manifest", help="corpus manifest (default OUT/corpus/manifest.json)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)

    p = sub.add_parser("eval", parents=[common], help="NRMSE of a weight file on a split")
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest")
    p.add_argument("--split", choices=("test", "train"), default="test")

    sub.add_parser("gradcheck", parents=[common], help="gradient oracle suite on random models")

    p = sub.add_parser("export", parents=[common], help="write a Verilog-A module")
    p.add_argument("--weights", required=True)

    p = sub.add_parser("verify-export", parents=[common], help="export, reparse, simulate and compare")
    p.add_argument("--weights", required=True)
    p.add_argument("--timestep", type=float, help="interpreter timestep (default period/divisor)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        cfg = with_overrides(cfg, seed=args.seed, threads=args.threads,
                             kind=getattr(args, "kind", None), epochs=getattr(args, "epochs", None),
                             learning_rate=getattr(args, "learning_rate", None))
        return COMMANDS[args.command](cfg, args)
    except (DivergenceError, ConvergenceError) as err:
        print(f"error: numerical divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, ShapeError, VaSyntaxError, FileNotFoundError, KeyError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
