"""
Experiment recipes: wires data generation, training, recognition and
analysis into complete runs and writes their CSV exports and reports.
"""

import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from analysis.activations import CM, FM, layer_activity, quadrant_split, record_activations
from analysis.metrics import convergence, cyclicity, trajectory_distance
from analysis.pca import fit_pca
from dataset.generator import (
    VideoSequence,
    frames_per_cycle,
    generate,
    parse_plan,
    primitive_set,
    subject_pool,
)
from dataset.syntax import PRIMITIVES, SubjectParams, get_primitive, sharing_pairs
from formatters.report_writer import (
    Check,
    checks_passed,
    format_checks,
    generate_run_report,
    save_report,
    write_projection,
    write_recognition_trace,
    write_table,
    write_training_log,
)
from network.dynamics import CLOSED, IntentionState, rollout
from recognition.error_regression import RecognitionTrace, entrainment_stream, recognize_streams
from training.trainer import TrainedModel, closed_loop_errors, continue_training, train
from utils.errors import DataError
from utils.run_config import DatasetConfig, RunConfig


# ---------------------------------------------------------------- datasets

def training_subjects(ds: DatasetConfig) -> List[SubjectParams]:
    """A single neutral subject, or a sampled pool when several are requested."""
    if ds.num_subjects == 1:
        return [SubjectParams(seed=ds.subject_seed)]
    return subject_pool(ds.num_subjects, ds.subject_seed, ds.subject_variation)


def heldout_subjects(ds: DatasetConfig) -> List[SubjectParams]:
    """Test subjects; drawn from their own stream so they do not depend on num_subjects."""
    return subject_pool(ds.heldout_subjects, ds.subject_seed + 1, ds.subject_variation)


def training_sequences(ds: DatasetConfig, names: Optional[Sequence[str]] = None) -> List[VideoSequence]:
    names = list(names) if names is not None else list(ds.primitives)
    return primitive_set(names, ds.cycles, ds.steps_per_cycle, training_subjects(ds))


def concat_sequences(ds: DatasetConfig) -> List[VideoSequence]:
    subjects = training_subjects(ds)
    plan = parse_plan(ds.concat_plan, ds.concat_cycles)
    return [
        generate(plan, ds.steps_per_cycle, subject,
                 label=ds.concat_plan if len(subjects) == 1 else f"{ds.concat_plan}/s{index}")
        for index, subject in enumerate(subjects)
    ]


def heldout_streams(ds: DatasetConfig) -> List[VideoSequence]:
    plan = parse_plan(ds.test_plan, ds.test_cycles)
    return [generate(plan, ds.steps_per_cycle, subject, label=f"{ds.test_plan}/h{index}")
            for index, subject in enumerate(heldout_subjects(ds))]


def reference_for(label: str, ds: DatasetConfig) -> VideoSequence:
    """Regenerate the reference sequence behind a training label ('P1', 'P1/s2', 'P1-P5-...')."""
    base, _, suffix = label.partition("/")
    subjects = training_subjects(ds)
    subject = subjects[0]
    if suffix.startswith("s") and suffix[1:].isdigit():
        index = int(suffix[1:])
        if index >= len(subjects):
            raise DataError(f"Label '{label}' refers to subject {index}, config has {len(subjects)}")
        subject = subjects[index]
    if base in PRIMITIVES:
        return generate([(base, ds.cycles)], ds.steps_per_cycle, subject, label=label)
    return generate(parse_plan(base, ds.concat_cycles), ds.steps_per_cycle, subject, label=label)


def frames_of(sequences: Sequence[VideoSequence]) -> List[np.ndarray]:
    return [seq.frames for seq in sequences]


def intention_for_primitive(model: TrainedModel, name: str) -> Optional[IntentionState]:
    """Trained intention of a primitive's sequence (first subject when several), if any."""
    for label, intention in zip(model.labels, model.intentions):
        if label == name or label.split("/")[0] == name:
            return intention
    return None


# ---------------------------------------------------------------- results

@dataclass
class ExperimentResult:
    """Outcome of one experiment: named checks, scalar metrics and written files."""

    name: str
    checks: List[Check] = field(default_factory=list)
    metrics: Dict[str, float] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return checks_passed(self.checks)


@dataclass
class TwoStageOutcome:
    stage1: TrainedModel
    stage2: TrainedModel
    control: TrainedModel

    @property
    def stage2_epochs(self) -> int:
        return self.stage2.epochs_in_stage(2)

    @property
    def control_epochs(self) -> int:
        return len(self.control.log)


@dataclass
class TransitionRecovery:
    """Error behaviour around one scripted transition (frame index of the new entry)."""

    frame: int
    baseline_mean: float
    baseline_std: float
    peak_mse: float
    recovery_steps: Optional[int]

    @property
    def threshold(self) -> float:
        return self.baseline_mean + 2.0 * self.baseline_std

    @property
    def recovered(self) -> bool:
        return self.recovery_steps is not None


# ---------------------------------------------------------------- recipes

def two_stage_training(primitives: Sequence[VideoSequence], concatenations: Sequence[VideoSequence],
                       run: RunConfig, seed: Optional[int] = None) -> TwoStageOutcome:
    """
    Train primitives, then add the concatenations on top (replaying the
    primitives), and train the concatenations from scratch as the control.
    """
    cfg = run.training if seed is None else replace(run.training, seed=seed)
    stage1 = train(frames_of(primitives), run.architecture, cfg, labels=[s.label for s in primitives])
    stage2 = continue_training(stage1, frames_of(concatenations), cfg,
                               new_labels=[s.label for s in concatenations], replay=frames_of(primitives))
    control = train(frames_of(concatenations), run.architecture, cfg,
                    labels=[s.label for s in concatenations])
    return TwoStageOutcome(stage1=stage1, stage2=stage2, control=control)


def closed_loop_states(model: TrainedModel, sequence: VideoSequence, intention: IntentionState,
                       steps: int):
    """Closed-loop regeneration from a trained intention; returns (outputs, states after step 0)."""
    outputs, trace = rollout(model.params, model.arch, intention, CLOSED, sequence.frames[:1], steps)
    return outputs, trace[1:]


def hierarchy_report(model: TrainedModel, sequences: Sequence[VideoSequence], run: RunConfig,
                     out_dir: Optional[str] = None) -> ExperimentResult:
    """
    Compare the dynamics of layer-1 context maps with top-layer feature maps
    during closed-loop regeneration of every trained primitive.
    """
    an, ds = run.analysis, run.dataset
    top = model.arch.num_layers
    if model.arch.layer(1).num_cm == 0:
        raise DataError("Layer 1 has no context maps to analyse")
    result = ExperimentResult(name="temporal hierarchy")

    low_traces, top_traces, periods = [], [], []
    for seq in sequences:
        intention = model.intention_for(seq.label)
        _, states = closed_loop_states(model, seq, intention, an.generate_steps + an.burn_in)
        states = states[an.burn_in:]
        low_traces.append(record_activations(states, 1, CM, label=seq.label))
        top_traces.append(record_activations(states, top, FM, label=seq.label))
        periods.append(frames_per_cycle(ds.steps_per_cycle, seq.subject.speed_scale))

    low_data = np.concatenate([t.values for t in low_traces])
    top_data = np.concatenate([t.values for t in top_traces])
    low_pca = fit_pca(low_data, min(an.components, low_data.shape[1]))
    top_pca = fit_pca(top_data, min(an.components, top_data.shape[1]))
    rows, projections = [], []
    for seq, low, high, period in zip(sequences, low_traces, top_traces, periods):
        low_proj, top_proj = low_pca.project(low.values), top_pca.project(high.values)
        scores = {
            "cm1_cyclicity": cyclicity(low_proj, period),
            "top_fm_cyclicity": cyclicity(top_proj, period),
            "cm1_convergence": convergence(low_proj),
            "top_fm_convergence": convergence(top_proj),
        }
        rows.append([seq.label] + [scores[k] for k in sorted(scores)])
        for key, value in scores.items():
            result.metrics[f"{seq.label}/{key}"] = value
        result.checks.extend([
            (f"{seq.label}: layer-1 CM cyclicity > {an.cyclicity_threshold:g}",
             scores["cm1_cyclicity"] > an.cyclicity_threshold, f"{scores['cm1_cyclicity']:.3f}"),
            (f"{seq.label}: layer-1 CM cyclicity > top FM cyclicity",
             scores["cm1_cyclicity"] > scores["top_fm_cyclicity"],
             f"{scores['cm1_cyclicity']:.3f} vs {scores['top_fm_cyclicity']:.3f}"),
            (f"{seq.label}: top FM convergence < {an.convergence_threshold:g}",
             scores["top_fm_convergence"] < an.convergence_threshold, f"{scores['top_fm_convergence']:.3f}"),
            (f"{seq.label}: layer-1 CM convergence > {an.moving_threshold:g}",
             scores["cm1_convergence"] > an.moving_threshold, f"{scores['cm1_convergence']:.3f}"),
        ])
        projections.append((seq.label, low_proj, top_proj))

    if out_dir:
        header = ["label", "cm1_convergence", "cm1_cyclicity", "top_fm_convergence", "top_fm_cyclicity"]
        write_table(os.path.join(out_dir, "hierarchy_metrics.csv"), header, rows)
        for name, index in (("hierarchy_cm1_pca.csv", 1), ("hierarchy_top_fm_pca.csv", 2)):
            stacked = np.concatenate([p[index] for p in projections])
            labels = [p[0] for p in projections for _ in range(len(p[index]))]
            steps = [t for p in projections for t in range(len(p[index]))]
            write_projection(stacked, os.path.join(out_dir, name), labels, steps=steps)
        result.artifacts += ["hierarchy_metrics.csv", "hierarchy_cm1_pca.csv", "hierarchy_top_fm_pca.csv"]
    return result


def spatial_report(model: TrainedModel, sequences: Sequence[VideoSequence], run: RunConfig,
                   level: int = 2, out_dir: Optional[str] = None) -> ExperimentResult:
    """
    Quadrant analysis of feature maps: primitives sharing a limb
    sub-primitive should trace closer trajectories in that limb's quadrant
    (upper-left Q2 for the left arm, lower-left Q3 for the legs).

    Every left-arm and leg sharing pair of the syntax gets a check. A pair
    whose primitives were not both trained, or that has no non-sharing
    primitive to compare against, fails with the reason as detail.
    """
    an = run.analysis
    result = ExperimentResult(name="spatial hierarchy")
    by_primitive: Dict[str, VideoSequence] = {}
    for seq in sequences:
        by_primitive.setdefault(seq.label.split("/")[0], seq)

    quadrant_traces: Dict[str, Dict[str, np.ndarray]] = {"Q2": {}, "Q3": {}}
    for name, seq in sorted(by_primitive.items()):
        _, states = closed_loop_states(model, seq, model.intention_for(seq.label),
                                       an.generate_steps + an.burn_in)
        parts = quadrant_split(record_activations(states[an.burn_in:], level, FM, label=name))
        for quadrant in quadrant_traces:
            quadrant_traces[quadrant][name] = parts[quadrant].values

    rows = []
    for limb, quadrant in (("left_arm", "Q2"), ("legs", "Q3")):
        traces = quadrant_traces[quadrant]
        names = sorted(traces)
        projected: Dict[str, np.ndarray] = {}
        if len(names) >= 2:
            stacked = np.concatenate([traces[n] for n in names])
            pca = fit_pca(stacked, min(an.components, stacked.shape[1]))
            projected = {n: pca.project(traces[n]) for n in names}
        key = "arm_left" if limb == "left_arm" else "leg"
        for a, b in sharing_pairs(limb):
            check = f"{limb} {a}-{b} closer than non-sharing ({quadrant})"
            missing = [p for p in (a, b) if p not in traces]
            if missing:
                result.checks.append((check, False, f"not trained: {', '.join(missing)}"))
                continue
            shared = trajectory_distance(projected[a], projected[b])
            others = [c for c in names if c not in (a, b)
                      and getattr(get_primitive(c), key) != getattr(get_primitive(a), key)]
            if not others:
                result.checks.append((check, False, "no non-sharing primitive trained"))
                continue
            baseline = float(np.mean([trajectory_distance(projected[x], projected[c])
                                      for x in (a, b) for c in others]))
            rows.append([limb, quadrant, a, b, shared, baseline])
            result.checks.append((check, shared < baseline,
                                  f"{shared:.4f} vs {baseline:.4f}"))
    if out_dir:
        write_table(os.path.join(out_dir, "spatial_pairs.csv"),
                    ["limb", "quadrant", "primitive_a", "primitive_b", "shared_distance", "baseline_distance"],
                    rows)
        result.artifacts.append("spatial_pairs.csv")
    return result


def recognition_comparison(model: TrainedModel, streams: Sequence[VideoSequence], run: RunConfig,
                           out_dir: Optional[str] = None, tag: str = ""
                           ) -> Tuple[ExperimentResult, List[Tuple[RecognitionTrace, RecognitionTrace]]]:
    """Error regression against entrainment on the same streams."""
    result = ExperimentResult(name="recognition")
    traces = []
    regressions = recognize_streams(model.params, model.arch, frames_of(streams), run.regression,
                                    threads=run.training.threads, record_states=out_dir is not None)
    for index, (stream, regression) in enumerate(zip(streams, regressions)):
        first = stream.plan[0][0] if stream.plan else ""
        fixed = intention_for_primitive(model, first)
        entrainment = entrainment_stream(model.params, model.arch, stream.frames, fixed,
                                         record_states=out_dir is not None)
        traces.append((regression, entrainment))
        result.metrics[f"{stream.label}/regression_mse"] = regression.mean_mse
        result.metrics[f"{stream.label}/entrainment_mse"] = entrainment.mean_mse
        result.checks.append((f"{stream.label}: error regression beats entrainment",
                              regression.mean_mse < entrainment.mean_mse,
                              f"{regression.mean_mse:.5f} vs {entrainment.mean_mse:.5f}"))
        if out_dir:
            for kind, trace in (("regression", regression), ("entrainment", entrainment)):
                name = f"recognition{tag}_{index}_{kind}.csv"
                write_recognition_trace(trace, os.path.join(out_dir, name), layer_activity(trace.states))
                result.artifacts.append(name)
    return result, traces


def transition_recovery(trace: RecognitionTrace, stream: VideoSequence, window: int) -> List[TransitionRecovery]:
    """
    For every transition frame s (predicted at step s-1), compare the error
    after the cut with the mean + 2 sigma of the last `window` steps before it.
    """
    errors = np.asarray(trace.step_mse)
    outcomes = []
    for frame in stream.transitions:
        cut = frame - 1
        before = errors[max(0, cut - window):cut]
        if len(before) < 2 or cut >= len(errors):
            continue
        mean, std = float(before.mean()), float(before.std())
        after = errors[cut:min(len(errors), cut + window + 1)]
        threshold = mean + 2.0 * std
        peak = int(np.argmax(after))
        recovery = None
        for offset in range(peak, len(after)):
            if after[offset] < threshold:
                recovery = offset
                break
        outcomes.append(TransitionRecovery(frame=frame, baseline_mean=mean, baseline_std=std,
                                           peak_mse=float(after.max()), recovery_steps=recovery))
    return outcomes


class ExperimentRunner:
    """
    Runs named experiments from one RunConfig and writes their outputs.
    """

    EXPERIMENTS = ("two-stage", "hierarchy", "spatial", "recognition", "variance", "transition")

    def __init__(self, run: RunConfig, out_dir: str, threads: Optional[int] = None):
        """
        Initialize the runner.

        Args:
            run: Loaded run configuration
            out_dir: Directory for CSVs and reports
            threads: Worker threads for training and batch recognition
                (default: training.threads of the run)
        """
        if threads is not None:
            run = replace(run, training=replace(run.training, threads=threads))
        self.run = run
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)

    def _seeded(self, seed: int) -> RunConfig:
        return replace(self.run, training=replace(self.run.training, seed=seed))

    def _finish(self, result: ExperimentResult, log=None) -> ExperimentResult:
        print(f"\n=== {result.name} ===")
        for line in format_checks(result.checks):
            print(line)
        report = generate_run_report(result.name, self.run.to_dict(), result.checks, result.metrics,
                                     log=log, artifacts=result.artifacts)
        name = result.name.replace(" ", "_") + ".md"
        save_report(report, self.out_dir, name)
        print(f"[Analysis] Report written to {os.path.join(self.out_dir, name)}")
        return result

    def two_stage(self) -> ExperimentResult:
        result = ExperimentResult(name="additional learning")
        primitives = training_sequences(self.run.dataset)
        concatenations = concat_sequences(self.run.dataset)
        rows, wins = [], 0
        for seed in self.run.analysis.seeds:
            outcome = two_stage_training(primitives, concatenations, self.run, seed=seed)
            closed = closed_loop_errors(outcome.stage2.params, outcome.stage2.arch,
                                        outcome.stage2.intentions[-len(concatenations):],
                                        frames_of(concatenations))
            faster = outcome.stage2_epochs < outcome.control_epochs
            wins += int(faster)
            rows.append([seed, outcome.stage2_epochs, outcome.control_epochs, float(np.mean(closed))])
            result.checks.append((f"seed {seed}: concatenation closed-loop MSE < 0.02",
                                  float(np.mean(closed)) < 0.02, f"{np.mean(closed):.5f}"))
            write_training_log(outcome.stage2.log, os.path.join(self.out_dir, f"two_stage_log_seed{seed}.csv"))
            write_training_log(outcome.control.log, os.path.join(self.out_dir, f"control_log_seed{seed}.csv"))
            result.artifacts += [f"two_stage_log_seed{seed}.csv", f"control_log_seed{seed}.csv"]
        seeds = len(self.run.analysis.seeds)
        result.checks.append(("stage 2 converges faster than scratch (majority of seeds)",
                              wins * 2 > seeds, f"{wins}/{seeds}"))
        write_table(os.path.join(self.out_dir, "two_stage_epochs.csv"),
                    ["seed", "stage2_epochs", "control_epochs", "stage2_closed_mse"], rows)
        result.artifacts.append("two_stage_epochs.csv")
        return self._finish(result)

    def hierarchy(self, model: TrainedModel) -> ExperimentResult:
        sequences = [reference_for(label, self.run.dataset) for label in model.labels
                     if label.split("/")[0] in PRIMITIVES]
        return self._finish(hierarchy_report(model, sequences, self.run, self.out_dir), log=model.log)

    def spatial(self, model: TrainedModel) -> ExperimentResult:
        sequences = [reference_for(label, self.run.dataset) for label in model.labels
                     if label.split("/")[0] in PRIMITIVES]
        return self._finish(spatial_report(model, sequences, self.run, out_dir=self.out_dir))

    def recognition(self, model: Optional[TrainedModel] = None) -> ExperimentResult:
        """Error regression vs entrainment; retrains per seed when no model is given."""
        streams = heldout_streams(self.run.dataset)
        if model is not None:
            result, _ = recognition_comparison(model, streams, self.run, self.out_dir)
            return self._finish(result, log=model.log)

        result = ExperimentResult(name="recognition")
        primitives = training_sequences(self.run.dataset)
        wins, rows = 0, []
        for seed in self.run.analysis.seeds:
            run = self._seeded(seed)
            trained = train(frames_of(primitives), run.architecture, run.training,
                            labels=[s.label for s in primitives])
            partial, _ = recognition_comparison(trained, streams, run, self.out_dir, tag=f"_seed{seed}")
            reg = float(np.mean([v for k, v in partial.metrics.items() if k.endswith("regression_mse")]))
            ent = float(np.mean([v for k, v in partial.metrics.items() if k.endswith("entrainment_mse")]))
            wins += int(reg < ent)
            rows.append([seed, reg, ent])
            result.artifacts += partial.artifacts
        seeds = len(self.run.analysis.seeds)
        result.checks.append(("error regression beats entrainment in >= 4 of 5 seeds",
                              wins >= max(1, seeds - 1), f"{wins}/{seeds}"))
        write_table(os.path.join(self.out_dir, "recognition_seeds.csv"),
                    ["seed", "regression_mse", "entrainment_mse"], rows)
        result.artifacts.append("recognition_seeds.csv")
        return self._finish(result)

    def variance(self) -> ExperimentResult:
        """Single-subject against multi-subject training, scored on held-out subjects."""
        result = ExperimentResult(name="variance benefit")
        ds = self.run.dataset
        many = ds.num_subjects if ds.num_subjects > 1 else 5
        single_data = training_sequences(replace(ds, num_subjects=1))
        multi_data = training_sequences(replace(ds, num_subjects=many))
        streams = heldout_streams(ds)
        wins, rows = 0, []
        for seed in self.run.analysis.seeds:
            run = self._seeded(seed)
            scores = []
            for data in (single_data, multi_data):
                trained = train(frames_of(data), run.architecture, run.training, labels=[s.label for s in data])
                traces = recognize_streams(trained.params, trained.arch, frames_of(streams), run.regression,
                                           threads=run.training.threads)
                scores.append(float(np.mean([t.mean_mse for t in traces])))
            wins += int(scores[1] < scores[0])
            rows.append([seed, scores[0], scores[1]])
        seeds = len(self.run.analysis.seeds)
        result.checks.append((f"{many}-subject model beats 1-subject model in >= 4 of 5 seeds",
                              wins >= max(1, seeds - 1), f"{wins}/{seeds}"))
        write_table(os.path.join(self.out_dir, "variance_seeds.csv"),
                    ["seed", "single_subject_mse", "multi_subject_mse"], rows)
        result.artifacts.append("variance_seeds.csv")
        return self._finish(result)

    def transition(self, model: TrainedModel) -> ExperimentResult:
        result = ExperimentResult(name="transition recovery")
        window = self.run.regression.window
        rows = []
        streams = heldout_streams(self.run.dataset)
        traces = recognize_streams(model.params, model.arch, frames_of(streams), self.run.regression,
                                   threads=self.run.training.threads, record_states=True)
        for index, (stream, trace) in enumerate(zip(streams, traces)):
            name = f"transition_{index}.csv"
            write_recognition_trace(trace, os.path.join(self.out_dir, name), layer_activity(trace.states))
            result.artifacts.append(name)
            for outcome in transition_recovery(trace, stream, window):
                rows.append([stream.label, outcome.frame, outcome.baseline_mean, outcome.threshold,
                             outcome.peak_mse, outcome.recovery_steps])
                result.checks.append((f"{stream.label} frame {outcome.frame}: recovers within {window} steps",
                                      outcome.recovered and outcome.recovery_steps <= window,
                                      f"{outcome.recovery_steps} steps"))
        write_table(os.path.join(self.out_dir, "transition_recovery.csv"),
                    ["stream", "frame", "baseline_mean", "threshold", "peak_mse", "recovery_steps"], rows)
        result.artifacts.append("transition_recovery.csv")
        return self._finish(result, log=model.log)
