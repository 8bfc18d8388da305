"""
Command-line entry point for the P-MSTRNN toolkit.

Subcommands generate synthetic data, train and extend models, regenerate
sequences, run online recognition, run the analysis experiments and check
gradients against finite differences.
"""

import argparse
import os
import sys
import traceback
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np
from dotenv import load_dotenv

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from dataset.generator import VideoSequence
from experiments import (
    ExperimentRunner,
    concat_sequences,
    frames_of,
    heldout_streams,
    intention_for_primitive,
    reference_for,
    training_sequences,
)
from analysis.activations import CM, FM, layer_activity, record_activations
from formatters.report_writer import (
    generate_run_report,
    save_report,
    write_frame_errors,
    write_recognition_trace,
    write_table,
    write_training_log,
)
from network.dynamics import CLOSED, MODES, rollout
from persistence.checkpoint import load_checkpoint, save_checkpoint
from persistence.containers import load_dataset, save_dataset, save_sequence
from recognition.error_regression import entrainment_stream, recognize_streams
from training.bptt import mse
from training.gradcheck import run_gradcheck
from training.trainer import closed_loop_errors, continue_training, open_loop_errors, train
from utils.errors import ConfigError, DataError, GradcheckFailure, PMSTRNNError
from utils.run_config import RunConfig, load_run_config

CHECKPOINT_NAME = "model.ckpt"
GRADCHECK_TOLERANCE = 1e-4


def _load_config(args) -> RunConfig:
    run = load_run_config(args.config)
    return replace(run, training=replace(run.training, threads=args.threads))


def _sequences(args, run: RunConfig, role: str, fallback) -> List[VideoSequence]:
    """Sequences of one role from --data when given, else generated from the config."""
    if getattr(args, "data", None):
        return load_dataset(args.data, role)
    return fallback(run.dataset)


def cmd_gen_data(args) -> int:
    run = _load_config(args)
    print("\n=== Generating Synthetic Movement Data ===\n")
    manifest = save_dataset(args.out, training_sequences(run.dataset), role="train",
                            manifest={"version": 1, "groups": {}})
    manifest = save_dataset(args.out, concat_sequences(run.dataset), role="concat", manifest=manifest)
    save_dataset(args.out, heldout_streams(run.dataset), role="test", manifest=manifest)
    return 0


def cmd_train(args) -> int:
    run = _load_config(args)
    sequences = _sequences(args, run, "train", training_sequences)
    print("\n=== Training (stage 1) ===\n")
    model = train(frames_of(sequences), run.architecture, run.training, labels=[s.label for s in sequences])
    _write_model_outputs(args.out, model, run, sequences, "training")
    return 0


def cmd_continue(args) -> int:
    run = _load_config(args)
    model = load_checkpoint(args.checkpoint)
    new = _sequences(args, run, "concat", concat_sequences)
    replay = None
    if args.replay:
        replay = [reference_for(label, run.dataset).frames for label in model.labels]
    print(f"\n=== Additional learning (stage {model.stage + 1}) ===\n")
    extended = continue_training(model, frames_of(new), run.training, new_labels=[s.label for s in new],
                                 replay=replay, freeze_old=not args.replay)
    _write_model_outputs(args.out, extended, run, new, "additional learning")
    return 0


def _write_model_outputs(out_dir: str, model, run: RunConfig, sequences: List[VideoSequence], title: str):
    os.makedirs(out_dir, exist_ok=True)
    save_checkpoint(model, os.path.join(out_dir, CHECKPOINT_NAME))
    write_training_log(model.log, os.path.join(out_dir, "training_log.csv"))
    known = [s for s in sequences if s.label in model.labels]
    intentions = [model.intention_for(s.label) for s in known]
    closed = closed_loop_errors(model.params, model.arch, intentions, frames_of(known))
    opened = open_loop_errors(model.params, model.arch, intentions, frames_of(known))
    last = model.last_evaluation()
    checks = [
        ("closed-loop MSE below stop threshold",
         last is not None and last.closed_mse < run.training.closed_loop_stop,
         f"{last.closed_mse:.5f}" if last else "not evaluated"),
        ("closed-loop error >= open-loop error", bool(model.closed_exceeds_open()),
         f"{last.closed_mse:.5f} vs {last.open_mse:.5f}" if last else "not evaluated"),
    ]
    metrics = {}
    for seq, c, o in zip(known, closed, opened):
        metrics[f"{seq.label}/closed_mse"] = c
        metrics[f"{seq.label}/open_mse"] = o
    report = generate_run_report(title, run.to_dict(), checks, metrics, log=model.log,
                                 artifacts=[CHECKPOINT_NAME, "training_log.csv"])
    save_report(report, out_dir)


def cmd_generate(args) -> int:
    run = _load_config(args)
    model = load_checkpoint(args.checkpoint)
    if args.sequence is None:
        raise DataError("generate needs --sequence LABEL")
    intention = model.intention_for(args.sequence)
    reference = reference_for(args.sequence, run.dataset)
    steps = args.steps or len(reference) - 1
    if args.mode not in MODES:
        raise DataError(f"generate --mode must be one of {MODES}")
    if args.mode != CLOSED and steps > len(reference):
        raise DataError(f"Open-loop generation of {steps} steps needs that many reference frames")
    outputs, _ = rollout(model.params, model.arch, intention, args.mode, reference.frames, steps,
                         record_trace=False)

    targets = reference.frames[1:steps + 1]
    compared = min(len(targets), len(outputs))
    errors = [mse(outputs[t:t + 1], targets[t:t + 1]) for t in range(compared)]
    os.makedirs(args.out, exist_ok=True)
    save_sequence(VideoSequence(frames=outputs.astype(np.float32), label=f"{args.sequence}/{args.mode}",
                                plan=reference.plan, subject=reference.subject),
                  os.path.join(args.out, "generated.pmsv"))
    write_frame_errors(errors, os.path.join(args.out, "frame_errors.csv"))
    print(f"[Analysis] {args.mode}-loop generation of {args.sequence}: {steps} steps, "
          f"mean MSE {np.mean(errors) if errors else 0.0:.5f}")
    return 0


def _map_selection(text: str, num_layers: int):
    """'fm2' -> (2, 'fm'): the maps whose flattened activations go into the trace CSV."""
    kind, level = text[:2].lower(), text[2:]
    if kind not in (FM, CM) or not level.isdigit() or not 1 <= int(level) <= num_layers:
        raise ConfigError(f"--maps expects fm<level> or cm<level> with level 1..{num_layers}, got '{text}'")
    return int(level), kind


def cmd_recognize(args) -> int:
    run = _load_config(args)
    model = load_checkpoint(args.checkpoint)
    maps = _map_selection(args.maps, model.arch.num_layers) if args.maps else None
    if args.sequence:
        streams = [reference_for(args.sequence, run.dataset)]
    else:
        streams = _sequences(args, run, "test", heldout_streams)
    if args.mode not in ("regression", "entrainment"):
        raise DataError("recognize --mode must be 'regression' or 'entrainment'")
    print(f"\n=== Recognition ({args.mode}) ===\n")
    if args.mode == "regression":
        traces = recognize_streams(model.params, model.arch, frames_of(streams),
                                   replace(run.regression, verbose=True),
                                   threads=run.training.threads, record_states=True)
    else:
        traces = [entrainment_stream(model.params, model.arch, stream.frames,
                                     intention_for_primitive(model, stream.plan[0][0] if stream.plan else ""),
                                     record_states=True)
                  for stream in streams]
    rows = []
    for index, (stream, trace) in enumerate(zip(streams, traces)):
        activations = record_activations(trace.states, *maps, label=stream.label) if maps else None
        write_recognition_trace(trace, os.path.join(args.out, f"recognition_{index}_{args.mode}.csv"),
                                layer_activity(trace.states), activations)
        rows.append([stream.label, trace.mean_mse, trace.resets])
        print(f"[ErrorRegression] {stream.label}: mean prediction MSE {trace.mean_mse:.5f}")
    write_table(os.path.join(args.out, f"recognition_{args.mode}_summary.csv"),
                ["stream", "mean_mse", "resets"], rows)
    return 0


def cmd_analyze(args) -> int:
    run = _load_config(args)
    runner = ExperimentRunner(run, args.out, threads=args.threads)
    model = load_checkpoint(args.checkpoint) if args.checkpoint else None
    needs_model = {"hierarchy", "spatial", "transition"}
    selected = ExperimentRunner.EXPERIMENTS if args.experiment == "all" else (args.experiment,)
    results = []
    for name in selected:
        if name in needs_model and model is None:
            raise DataError(f"Experiment '{name}' needs --checkpoint")
        if name == "two-stage":
            results.append(runner.two_stage())
        elif name == "hierarchy":
            results.append(runner.hierarchy(model))
        elif name == "spatial":
            results.append(runner.spatial(model))
        elif name == "recognition":
            results.append(runner.recognition(model))
        elif name == "variance":
            results.append(runner.variance())
        elif name == "transition":
            results.append(runner.transition(model))
    passed = sum(1 for r in results if r.passed)
    print(f"\n{passed}/{len(results)} experiments passed all checks")
    return 0


def cmd_gradcheck(args) -> int:
    run = _load_config(args)
    print("\n=== Gradient Check ===\n")
    report = run_gradcheck(run.architecture, trials=args.trials, steps=args.steps, seed=args.seed,
                           tolerance=GRADCHECK_TOLERANCE, verbose=True)
    print(report.format_summary())
    write_table(os.path.join(args.out, "gradcheck.csv"), ["tensor", "max_relative_error"],
                sorted(report.max_errors.items()))
    if not report.passed:
        raise GradcheckFailure(f"Relative gradient error {report.worst:.3e} exceeds {GRADCHECK_TOLERANCE:g} "
                               f"for: {', '.join(report.failures())}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="P-MSTRNN: predictive-coding RNN with multiple spatio-temporal scales"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        type=str,
        default=os.environ.get("PMSTRNN_CONFIG"),
        help="YAML run configuration (default: $PMSTRNN_CONFIG or built-in defaults)"
    )
    common.add_argument(
        "--out",
        type=str,
        default="./output",
        help="Output directory"
    )
    common.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("PMSTRNN_THREADS", "1")),
        help="Worker threads for training and batch recognition (default: $PMSTRNN_THREADS or 1)"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="Write the synthetic dataset to --out")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="Train primitives from scratch")
    p.add_argument("--data", type=str, default=None, help="Dataset directory (default: generate from config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("continue", parents=[common], help="Additional learning of concatenations")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--replay", action=argparse.BooleanOptionalAction, default=True,
                   help="Jointly retrain the previously learned sequences (default: on)")
    p.set_defaults(func=cmd_continue)

    p = sub.add_parser("generate", parents=[common], help="Regenerate a trained sequence")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--sequence", type=str, required=True, help="Training label, e.g. P1")
    p.add_argument("--mode", type=str, default=CLOSED, choices=MODES)
    p.add_argument("--steps", type=int, default=None, help="Steps to generate (default: reference length - 1)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("recognize", parents=[common], help="Online recognition of test streams")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--mode", type=str, default="regression", choices=("regression", "entrainment"))
    p.add_argument("--sequence", type=str, default=None, help="Recognize a training label's reference instead")
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--maps", type=str, default=None,
                   help="Also export flattened activations of one map set per step, e.g. fm2 or cm1")
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("analyze", parents=[common], help="Run analysis experiments")
    p.add_argument("--experiment", type=str, default="all",
                   choices=("all",) + ExperimentRunner.EXPERIMENTS)
    p.add_argument("--checkpoint", type=str, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gradcheck", parents=[common], help="Compare BPTT with finite differences")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit status."""
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PMSTRNNError as e:
        print(f"ERROR: {e}")
        return e.exit_code
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
