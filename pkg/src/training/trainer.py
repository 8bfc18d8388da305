"""
Training loop: full-batch SGD on open-loop gradients with per-sequence
intention inference and closed-loop stopping.

Weights, kernels, biases and one intention state per training sequence are
optimized jointly. Closed-loop error is measured every `eval_every` epochs
and training stops once its mean drops below `closed_loop_stop`.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from network.architecture import ArchitectureSpec
from network.dynamics import CLOSED, OPEN, IntentionState, rollout
from network.params import NetworkParams, init_params
from training.bptt import BPTTResult, bptt, mse
from utils.errors import ConfigError, DataError, NumericalFailureError, ShapeError, TrainingDivergedError


@dataclass
class TrainingConfig:
    """Optimizer and stopping settings."""

    learning_rate: float = 0.001
    momentum: float = 0.0
    closed_loop_stop: float = 0.01
    max_epochs: int = 5000
    seed: int = 0
    eval_every: int = 10
    record_wall_time: bool = False
    threads: int = 1
    verbose: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("training.learning_rate must be >= 0")
        if self.closed_loop_stop <= 0:
            raise ConfigError("training.closed_loop_stop must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("training.momentum must be in [0, 1)")
        if self.max_epochs < 0 or self.eval_every < 1 or self.threads < 1:
            raise ConfigError("training.max_epochs >= 0, eval_every >= 1 and threads >= 1 are required")


@dataclass
class EpochRecord:
    """One row of the training log."""

    epoch: int
    open_mse: float
    closed_mse: Optional[float]
    wall_seconds: float
    stage: int = 1


@dataclass
class TrainedModel:
    """Parameters, per-sequence intentions and the full training log."""

    arch: ArchitectureSpec
    params: NetworkParams
    intentions: List[IntentionState]
    labels: List[str]
    log: List[EpochRecord] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        if len(self.intentions) != len(self.labels):
            raise DataError("One intention per training sequence is required")

    def intention_for(self, label: str) -> IntentionState:
        try:
            return self.intentions[self.labels.index(label)]
        except ValueError:
            raise DataError(f"No trained intention for sequence '{label}'") from None

    @property
    def stage(self) -> int:
        return self.log[-1].stage if self.log else 0

    def epochs_in_stage(self, stage: int) -> int:
        return sum(1 for record in self.log if record.stage == stage)

    def last_evaluation(self) -> Optional[EpochRecord]:
        for record in reversed(self.log):
            if record.closed_mse is not None:
                return record
        return None

    def closed_exceeds_open(self) -> Optional[bool]:
        """Whether closed-loop error >= open-loop error at the last evaluation."""
        record = self.last_evaluation()
        return None if record is None else record.closed_mse >= record.open_mse


def closed_loop_errors(params: NetworkParams, arch: ArchitectureSpec,
                       intentions: Sequence[IntentionState], sequences: Sequence[np.ndarray]) -> List[float]:
    """Per-sequence MSE of closed-loop regeneration from the trained intentions."""
    errors = []
    for intention, seq in zip(intentions, sequences):
        outputs, _ = rollout(params, arch, intention, CLOSED, seq, len(seq) - 1, record_trace=False)
        errors.append(mse(outputs, seq[1:]))
    return errors


def open_loop_errors(params: NetworkParams, arch: ArchitectureSpec,
                     intentions: Sequence[IntentionState], sequences: Sequence[np.ndarray]) -> List[float]:
    """Per-sequence one-step open-loop MSE."""
    errors = []
    for intention, seq in zip(intentions, sequences):
        outputs, _ = rollout(params, arch, intention, OPEN, seq, len(seq) - 1, record_trace=False)
        errors.append(mse(outputs, seq[1:]))
    return errors


def _validate_sequences(sequences: Sequence[np.ndarray], arch: ArchitectureSpec) -> List[np.ndarray]:
    checked = []
    for index, seq in enumerate(sequences):
        seq = np.asarray(seq, dtype=np.float64)
        if seq.ndim != 3 or len(seq) < 2:
            raise DataError(f"Sequence {index} needs shape (T >= 2, H, W), got {seq.shape}")
        if seq.shape[1:] != tuple(arch.input_size):
            raise ShapeError(f"Sequence {index} frames are {seq.shape[1:]}, expected {arch.input_size}")
        checked.append(seq)
    return checked


def _map_ordered(fn: Callable[[int], BPTTResult], count: int, threads: int) -> List[BPTTResult]:
    """Parallel compute, results returned in sequence order for a deterministic reduction."""
    if threads <= 1 or count <= 1:
        return [fn(k) for k in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def _optimize(model: TrainedModel, sequences: List[np.ndarray], cfg: TrainingConfig,
              trainable: Sequence[int], stage: int) -> TrainedModel:
    arch = model.arch
    params = model.params.copy()
    intentions = [intention.copy() for intention in model.intentions]
    log = list(model.log)
    trainable = set(trainable)
    velocity = params.zeros_like() if cfg.momentum > 0 else None
    intention_velocity = {k: intentions[k].zeros_like() for k in trainable}
    clock = time.perf_counter()

    if cfg.verbose:
        print(f"[Trainer] Stage {stage}: {len(sequences)} sequences, {params.num_values():,} parameters, "
              f"lr={cfg.learning_rate:g}, stop at closed-loop MSE < {cfg.closed_loop_stop:g}")

    def backward(k: int) -> BPTTResult:
        return bptt(params, arch, intentions[k], sequences[k], OPEN)

    for epoch in range(1, cfg.max_epochs + 1):
        try:
            results = _map_ordered(backward, len(sequences), cfg.threads)
        except NumericalFailureError as e:
            raise TrainingDivergedError(f"Training diverged at epoch {epoch}: {e}", log=log, step=e.step) from e
        open_mse = float(np.mean([r.loss for r in results]))
        if not np.isfinite(open_mse):
            raise TrainingDivergedError(f"Non-finite training loss at epoch {epoch}", log=log)

        total = params.zeros_like()
        for result in results:
            for name, grad in result.param_grads.items():
                total.tensors[name] += grad

        if velocity is None:
            params = NetworkParams({
                name: value - cfg.learning_rate * total[name] for name, value in params.items()
            })
        else:
            for name, grad in total.items():
                velocity.tensors[name] = cfg.momentum * velocity[name] - cfg.learning_rate * grad
            params = NetworkParams({name: value + velocity[name] for name, value in params.items()})

        for k in sorted(trainable):
            grad = results[k].intention_grad
            if velocity is None:
                intentions[k] = intentions[k].add_scaled(grad, -cfg.learning_rate)
            else:
                step = intention_velocity[k].add_scaled(grad, -cfg.learning_rate / cfg.momentum)
                intention_velocity[k] = IntentionState(
                    [cfg.momentum * a for a in step.f_hat], [cfg.momentum * a for a in step.c_hat])
                intentions[k] = intentions[k].add_scaled(intention_velocity[k], 1.0)

        closed_mse = None
        if epoch % cfg.eval_every == 0 or epoch == cfg.max_epochs:
            closed_mse = float(np.mean(closed_loop_errors(params, arch, intentions, sequences)))
            if not np.isfinite(closed_mse):
                raise TrainingDivergedError(f"Non-finite closed-loop error at epoch {epoch}", log=log)
            if cfg.verbose:
                print(f"[Trainer] epoch {epoch:5d}  open {open_mse:.5f}  closed {closed_mse:.5f}")

        wall = time.perf_counter() - clock if cfg.record_wall_time else 0.0
        log.append(EpochRecord(epoch=epoch, open_mse=open_mse, closed_mse=closed_mse,
                               wall_seconds=wall, stage=stage))
        if closed_mse is not None and closed_mse < cfg.closed_loop_stop:
            if cfg.verbose:
                print(f"[Trainer] Closed-loop threshold reached after {epoch} epochs")
            break

    trained = TrainedModel(arch=arch, params=params, intentions=intentions,
                           labels=list(model.labels), log=log, seed=model.seed)
    if cfg.verbose:
        ordering = trained.closed_exceeds_open()
        if ordering is not None:
            mark = "✓" if ordering else "✗"
            print(f"[Trainer] {mark} closed-loop error >= open-loop error at stop")
    return trained


def train(dataset: Sequence[np.ndarray], arch: ArchitectureSpec, cfg: TrainingConfig,
          labels: Optional[Sequence[str]] = None) -> TrainedModel:
    """
    Train parameters and per-sequence intentions from scratch.

    Args:
        dataset: Training sequences, each (T, H, W) with T >= 2
        arch: Network architecture
        cfg: Training configuration
        labels: Sequence labels (default "seq0", "seq1", ...)

    Returns:
        TrainedModel
    """
    if len(dataset) == 0:
        raise DataError("empty dataset")
    sequences = _validate_sequences(dataset, arch)
    labels = list(labels) if labels is not None else [f"seq{k}" for k in range(len(sequences))]
    model = TrainedModel(
        arch=arch,
        params=init_params(arch, cfg.seed),
        intentions=[IntentionState.zeros(arch) for _ in sequences],
        labels=labels,
        seed=cfg.seed,
    )
    return _optimize(model, sequences, cfg, trainable=range(len(sequences)), stage=1)


def continue_training(model: TrainedModel, new_sequences: Sequence[np.ndarray], cfg: TrainingConfig,
                      new_labels: Optional[Sequence[str]] = None,
                      replay: Optional[Sequence[np.ndarray]] = None,
                      freeze_old: bool = False) -> TrainedModel:
    """
    Additional learning of new sequences on top of a trained model.

    New sequences receive fresh zero intentions. By default all parameters
    and all intentions are optimized jointly, which needs `replay`: the
    previously learned sequences aligned with model.labels. With
    `freeze_old=True` the earlier sequences are not visited and their
    intentions stay fixed while the parameters adapt.

    Args:
        model: Previously trained model
        new_sequences: Additional sequences
        cfg: Training configuration (same stopping rule)
        new_labels: Labels for the new sequences
        replay: Previously learned sequences, in model.labels order
        freeze_old: Keep the earlier intentions fixed instead of replaying

    Returns:
        New TrainedModel (the input model is not modified)

    Raises:
        DataError: replay is missing without freeze_old, given together
            with freeze_old, or does not match model.labels
    """
    if len(new_sequences) == 0:
        return model
    if freeze_old and replay is not None:
        raise DataError("Replay sequences and freeze_old=True exclude each other")
    if not freeze_old and replay is None:
        raise DataError("Joint additional learning needs the replay sequences; "
                        "pass freeze_old=True to keep earlier intentions fixed")
    model.params.check_against(model.arch)
    fresh = _validate_sequences(new_sequences, model.arch)
    old = _validate_sequences(replay, model.arch) if replay is not None else []
    if replay is not None and len(old) != len(model.labels):
        raise DataError(f"Replay has {len(old)} sequences, model knows {len(model.labels)}")

    first_new = len(model.labels)
    labels = list(model.labels) + (
        list(new_labels) if new_labels is not None else [f"seq{first_new + k}" for k in range(len(fresh))]
    )
    extended = TrainedModel(
        arch=model.arch,
        params=model.params,
        intentions=list(model.intentions) + [IntentionState.zeros(model.arch) for _ in fresh],
        labels=labels,
        log=model.log,
        seed=model.seed,
    )
    if replay is not None:
        sequences = old + fresh
        trainable = range(len(sequences))
    else:
        # placeholders keep indices aligned; only new sequences are visited
        sequences = [None] * first_new + fresh
        trainable = range(first_new, len(sequences))
    return _optimize_subset(extended, sequences, cfg, list(trainable), stage=model.stage + 1)


def _optimize_subset(model: TrainedModel, sequences: List[Optional[np.ndarray]], cfg: TrainingConfig,
                     trainable: List[int], stage: int) -> TrainedModel:
    """Optimize only the sequences that are present; absent ones keep their intentions."""
    present = [k for k, seq in enumerate(sequences) if seq is not None]
    if len(present) == len(sequences):
        return _optimize(model, sequences, cfg, trainable, stage)
    sub = TrainedModel(
        arch=model.arch,
        params=model.params,
        intentions=[model.intentions[k] for k in present],
        labels=[model.labels[k] for k in present],
        log=model.log,
        seed=model.seed,
    )
    position = {k: slot for slot, k in enumerate(present)}
    trained = _optimize(sub, [sequences[k] for k in present], cfg,
                        [position[k] for k in trainable if k in position], stage)
    intentions = list(model.intentions)
    for k, slot in position.items():
        intentions[k] = trained.intentions[slot]
    return TrainedModel(arch=model.arch, params=trained.params, intentions=intentions,
                        labels=list(model.labels), log=trained.log, seed=model.seed)
