"""
CSV exports and markdown run reports.

CSV files hold no timestamps and write floats with repr(), so identical runs
produce byte-identical files.
"""

import csv
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from analysis.activations import ActivationTrace
from recognition.error_regression import RecognitionTrace
from training.trainer import EpochRecord
from utils.errors import ShapeError

Check = Tuple[str, bool, str]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_rows(path: str, header: Sequence[str], rows: Sequence[Sequence]):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_training_log(log: Sequence[EpochRecord], path: str):
    """epoch, open_mse, closed_mse (empty when not evaluated), wall_seconds, stage."""
    _write_rows(path, ["epoch", "open_mse", "closed_mse", "wall_seconds", "stage"],
                [(r.epoch, r.open_mse, r.closed_mse, r.wall_seconds, r.stage) for r in log])


def write_recognition_trace(trace: RecognitionTrace, path: str,
                            activity: Optional[Dict[str, np.ndarray]] = None,
                            activations: Optional[ActivationTrace] = None):
    """
    Per-step recognition record.

    Columns: step (the frame being predicted is step + 1), mse, window_mse
    (empty for entrainment), then one column per layer activity summary
    (mean absolute activation, e.g. fm1, cm1). When `activations` is given,
    its flattened map values follow as `<kind><level>_<j>` columns, one row
    per step, ready for a PCA fit.
    """
    activity = activity or {}
    names = sorted(activity)
    values = activations.values if activations is not None else np.zeros((len(trace.step_mse), 0))
    if len(values) != len(trace.step_mse):
        raise ShapeError(f"Activation trace has {len(values)} steps, recognition trace {len(trace.step_mse)}")
    columns = []
    if activations is not None:
        columns = [f"{activations.kind}{activations.level}_{j}" for j in range(values.shape[1])]
    rows = []
    for t in range(len(trace.step_mse)):
        window = trace.window_mse[t] if t < len(trace.window_mse) else None
        rows.append([t, float(trace.step_mse[t]), window] + [float(activity[n][t]) for n in names]
                    + [float(v) for v in values[t]])
    _write_rows(path, ["step", "mse", "window_mse"] + names + columns, rows)


def write_projection(projected: np.ndarray, path: str, primitives: Sequence[str],
                     subjects: Optional[Sequence[str]] = None, steps: Optional[Sequence[int]] = None):
    """step, pc1..pck, primitive, subject."""
    projected = np.asarray(projected)
    k = projected.shape[1]
    subjects = subjects if subjects is not None else [""] * len(projected)
    steps = steps if steps is not None else range(len(projected))
    rows = [[step] + [float(v) for v in row] + [prim, subj]
            for step, row, prim, subj in zip(steps, projected, primitives, subjects)]
    _write_rows(path, ["step"] + [f"pc{j + 1}" for j in range(k)] + ["primitive", "subject"], rows)


def write_frame_errors(errors: Sequence[float], path: str):
    _write_rows(path, ["step", "mse"], [(t, float(e)) for t, e in enumerate(errors)])


def write_table(path: str, header: Sequence[str], rows: Sequence[Sequence]):
    """Generic CSV table for experiment summaries."""
    _write_rows(path, header, rows)


def generate_run_report(title: str, config: Dict, checks: Sequence[Check],
                        metrics: Optional[Dict[str, float]] = None,
                        log: Optional[Sequence[EpochRecord]] = None, log_tail: int = 10,
                        artifacts: Optional[Sequence[str]] = None) -> str:
    """
    Markdown summary of one experiment run.

    Args:
        title: Experiment name
        config: Run configuration as a plain dict
        checks: (property, passed, detail) triples
        metrics: Named scalar results
        log: Training log (its tail is shown)
        log_tail: Number of log rows to show
        artifacts: Relative paths of files written by the run

    Returns:
        Markdown string
    """
    lines = []

    lines.append(f"# {title}")
    lines.append("")
    passed = sum(1 for _, ok, _ in checks if ok)
    lines.append(f"**Checks passed:** {passed}/{len(checks)}")
    lines.append("")
    lines.append("---")
    lines.append("")

    if checks:
        lines.append("## Properties")
        lines.append("")
        lines.append("| | Property | Detail |")
        lines.append("|---|---|---|")
        for name, ok, detail in checks:
            lines.append(f"| {'✓' if ok else '✗'} | {name} | {detail} |")
        lines.append("")

    if metrics:
        lines.append("## Metrics")
        lines.append("")
        lines.append("| Metric | Value |")
        lines.append("|---|---|")
        for name, value in metrics.items():
            shown = f"{value:.6g}" if isinstance(value, (float, np.floating)) else str(value)
            lines.append(f"| {name} | {shown} |")
        lines.append("")

    if log:
        lines.append(f"## Training log (last {min(log_tail, len(log))} epochs)")
        lines.append("")
        lines.append("| Stage | Epoch | Open MSE | Closed MSE |")
        lines.append("|---|---|---|---|")
        for r in list(log)[-log_tail:]:
            closed = f"{r.closed_mse:.6f}" if r.closed_mse is not None else "-"
            lines.append(f"| {r.stage} | {r.epoch} | {r.open_mse:.6f} | {closed} |")
        lines.append("")

    if artifacts:
        lines.append("## Files")
        lines.append("")
        for name in artifacts:
            lines.append(f"- [{name}](./{name})")
        lines.append("")

    lines.append("---")
    lines.append("")
    lines.append("## Configuration")
    lines.append("")
    lines.append("```yaml")
    lines.append(yaml.safe_dump(config, sort_keys=True, default_flow_style=None).rstrip())
    lines.append("```")
    lines.append("")

    return "\n".join(lines)


def save_report(content: str, output_dir: str, name: str = "report.md") -> str:
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, name)
    with open(path, "w") as f:
        f.write(content)
    return path


def checks_passed(checks: Sequence[Check]) -> bool:
    """True when there is at least one check and every check holds."""
    return bool(checks) and all(ok for _, ok, _ in checks)


def format_checks(checks: Sequence[Check]) -> List[str]:
    """Console lines in ✓/✗ style."""
    return [f"  {'✓' if ok else '✗'} {name}: {detail}" for name, ok, detail in checks]
