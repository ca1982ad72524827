"""Four-stage router: detection, classification, sequence verification, committee verification."""

from __future__ import annotations

import dataclasses
import math
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional

import numpy as np

from . import seq_net
from .config import PipelineConfig, SequenceConfig
from .ensemble import CONFIRMED, CommitteeConfig, CommitteeTrainingError, train_committee, verify
from .feature_select import FeatureMask, SelectionConfig, SelectionError, select_features
from .flow_model import (
    ClassRow,
    FlowRecord,
    LabelSpace,
    MetricReport,
    StageTallies,
    TotalTallies,
    Verdict,
    aggregate_totals,
    binary_counts,
    compute_metrics,
    per_class_report,
)
from .ingest import RNG_ALGORITHM, OnlineNormalizer
from .stream_tree import BinaryHAT, DriftEvent, HatConfig, HoeffdingAdaptiveTree


class StageId(IntEnum):
    DETECT = 1
    CLASSIFY = 2
    SEQUENCE = 3
    VERIFY = 4

    @property
    def layer(self) -> str:
        return LAYERS[int(self)]


LAYERS = {1: "edge", 2: "fog", 3: "cloud", 4: "cloud"}


class Journal:
    """Append-only ``index|stage|event|payload`` lines; ``-`` marks run-level entries."""

    def __init__(self):
        self.lines: list[str] = []
        self._lock = threading.Lock()

    def log(self, index, stage, event: str, payload="") -> None:
        idx = "-" if index is None else str(index)
        st = "-" if stage is None else str(int(stage))
        with self._lock:
            self.lines.append(f"{idx}|{st}|{event}|{payload}")


def _mask_text(mask: FeatureMask) -> str:
    return ",".join(str(i) for i in mask.selected)


class _TreeStage:
    stage: StageId

    def __init__(self, tree: HoeffdingAdaptiveTree, sel: SelectionConfig, warmup: int, journal: Journal):
        self.tree = tree
        self.tree.mask_provider = self._remask
        self.sel = sel
        self.warmup = warmup
        self.journal = journal
        self.recent: deque = deque(maxlen=sel.buffer_size)
        self.seen = 0
        self.current = 0
        self.drift_events: list[DriftEvent] = []
        self.masks: list[tuple[int, FeatureMask]] = []

    def _remask(self) -> Optional[FeatureMask]:
        try:
            mask = select_features(np.asarray(self.recent), self.sel)
        except SelectionError as exc:
            self.journal.log(self.current, self.stage, "mask_kept", str(exc))
            return None
        self.masks.append((self.current, mask))
        self.journal.log(self.current, self.stage, "mask", _mask_text(mask))
        return mask

    def _learn(self, rec: FlowRecord) -> None:
        self.current = rec.arrival_index
        self.recent.append(rec.features)
        events = self.tree.learn_one(rec.features, rec.true_class, rec.arrival_index)
        for ev in events:
            self.drift_events.append(ev)
            path = "".join(str(p) for p in ev.path) or "root"
            self.journal.log(ev.arrival_index, self.stage, ev.kind, path)
        self.seen += 1
        if self.seen == self.warmup:
            self.journal.log(rec.arrival_index, self.stage, "warmup_end", self.seen)
            mask = self._remask()
            if mask is not None:
                self.tree.set_mask(mask)


class DetectionStage(_TreeStage):
    """Binary normal/attack stream tree (edge layer)."""

    stage = StageId.DETECT

    def __init__(self, n_features: int, space: LabelSpace, cfg: HatConfig, sel: SelectionConfig,
                 warmup: int, journal: Journal):
        super().__init__(BinaryHAT(n_features, space.normal_id, cfg), sel, warmup, journal)

    def detect(self, rec: FlowRecord) -> bool:
        flagged, _ = self.tree.predict(rec.features)
        self._learn(rec)
        return bool(flagged)


class ClassificationStage(_TreeStage):
    """Multiclass stream tree over attack-flagged flows (fog layer)."""

    stage = StageId.CLASSIFY

    def __init__(self, n_features: int, space: LabelSpace, cfg: HatConfig, sel: SelectionConfig,
                 warmup: int, journal: Journal):
        super().__init__(HoeffdingAdaptiveTree(n_features, space.n_classes, cfg), sel, warmup, journal)

    def classify(self, rec: FlowRecord) -> int:
        cls, _ = self.tree.predict(rec.features)
        self._learn(rec)
        return cls


class SequenceStage:
    """LSTM verifier over windows of consecutive flows (cloud layer).

    Until the warm-up buffer is trained on, records keep the normal flag they
    arrived with.
    """

    stage = StageId.SEQUENCE

    def __init__(self, n_features: int, space: LabelSpace, cfg: SequenceConfig, sel: SelectionConfig,
                 seed: int, journal: Journal):
        self.space = space
        self.cfg = cfg
        self.sel = sel
        self.seed = seed
        self.journal = journal
        self.params: Optional[seq_net.LstmParams] = None
        self.mask: Optional[FeatureMask] = None
        self.cap = math.ceil(cfg.warmup_size / space.n_classes)
        self.per_class = np.zeros(space.n_classes, dtype=np.int64)
        self.warm_windows: list[np.ndarray] = []
        self.warm_labels: list[int] = []
        self.warm_done = False
        # flat history of (features, label) long enough to rebuild the refresh windows
        self.recent: deque = deque(maxlen=cfg.warmup_size + cfg.seq_len - 1)
        self.trainings = 0

    def observe(self, rec: FlowRecord, history: tuple) -> None:
        """Training tap: every record of the run passes through here in arrival order."""
        self.recent.append((rec.features, rec.true_class))
        idx = rec.arrival_index
        if not self.warm_done:
            if self.per_class[rec.true_class] < self.cap:
                self.per_class[rec.true_class] += 1
                self.warm_windows.append(seq_net.make_window(history, self.cfg.seq_len))
                self.warm_labels.append(rec.true_class)
            if len(self.warm_labels) >= self.cfg.warmup_size or idx + 1 >= self.cfg.warmup_horizon:
                self._train(np.stack(self.warm_windows), np.array(self.warm_labels), idx, "warmup")
                self.warm_done = True
                self.warm_windows, self.warm_labels = [], []
        elif self.cfg.refresh_every and (idx + 1) % self.cfg.refresh_every == 0:
            feats = np.stack([f for f, _ in self.recent])
            labels = np.array([y for _, y in self.recent])
            t = self.cfg.seq_len
            n = len(labels) - t + 1
            if n > 0:
                windows = np.stack([feats[i:i + t] for i in range(n)])
                self._train(windows, labels[t - 1:], idx, "refresh")

    def _train(self, windows: np.ndarray, labels: np.ndarray, index: int, why: str) -> None:
        if len(labels) == 0:
            return
        try:
            mask = select_features(windows[:, -1, :], self.sel)
        except SelectionError:
            mask = FeatureMask.full(windows.shape[2])
        cfg = self.cfg
        seed = self.seed + 7919 * self.trainings
        params = seq_net.init_params(len(mask), cfg.hidden_dim, self.space.n_classes, seed=seed,
                                     learning_rate=cfg.learning_rate)
        try:
            params, losses = seq_net.fit(params, windows[:, :, mask.indices], labels, cfg.epochs,
                                         cfg.batch_size, seed=seed)
        except seq_net.TrainingError as exc:
            self.journal.log(index, self.stage, "train_failed", str(exc))
            return
        self.trainings += 1
        self.params, self.mask = params, mask
        self.journal.log(index, self.stage, why, f"records={len(labels)}")
        self.journal.log(index, self.stage, "mask", _mask_text(mask))
        for epoch, loss in enumerate(losses, start=1):
            self.journal.log(index, self.stage, "epoch_loss", f"{epoch}:{loss:.6f}")

    def classify(self, rec: FlowRecord, history: tuple) -> int:
        if self.params is None:
            return self.space.normal_id
        window = seq_net.make_window(history, self.cfg.seq_len, self.mask.indices)
        return int(np.argmax(seq_net.forward(window, self.params)))


class VerificationStage:
    """One-vs-rest committees per attack class (cloud layer)."""

    stage = StageId.VERIFY

    def __init__(self, space: LabelSpace, cfg: CommitteeConfig, sel: SelectionConfig,
                 refresh_every: int, journal: Journal):
        self.space = space
        self.cfg = cfg
        self.sel = sel
        self.refresh_every = refresh_every
        self.journal = journal
        self.committees: dict = {}
        self.buffers = {c: [] for c in space.attack_ids}
        self.recent = {c: deque(maxlen=cfg.train_buffer_size) for c in space.attack_ids}
        self.failed: set = set()
        self.bypassed: dict = {c: 0 for c in space.attack_ids}

    def verify(self, rec: FlowRecord, cls: int) -> bool:
        committee = self.committees.get(cls)
        if committee is None:
            if self.bypassed[cls] == 0:
                self.journal.log(rec.arrival_index, self.stage, "committee_bypass", self.space.class_names[cls])
            self.bypassed[cls] += 1
            confirmed = True
        else:
            confirmed = verify(committee, rec.features) == CONFIRMED
        self._collect(rec, cls)
        return confirmed

    def _collect(self, rec: FlowRecord, cls: int) -> None:
        item = (rec.features, rec.true_class, rec.arrival_index)
        self.recent[cls].append(item)
        buf = self.buffers[cls]
        if cls not in self.committees and cls not in self.failed:
            buf.append(item)
            if len(buf) >= self.cfg.train_buffer_size:
                self._train(cls, buf, rec.arrival_index, "warmup")
        if self.refresh_every and (rec.arrival_index + 1) % self.refresh_every == 0:
            for c in self.space.attack_ids:
                if len(self.recent[c]):
                    self._train(c, list(self.recent[c]), rec.arrival_index, "refresh")

    def _train(self, cls: int, items: list, index: int, why: str) -> None:
        # negatives from the other classes' traffic keep the buffer two-sided
        others = [it for c, b in self.buffers.items() if c != cls for it in b if it[1] != cls]
        others += [it for c, d in self.recent.items() if c != cls for it in d if it[1] != cls]
        seen = set()
        extra = []
        for it in sorted(others, key=lambda it: it[2]):
            if it[2] not in seen:
                seen.add(it[2])
                extra.append(it)
        own = {it[2] for it in items}
        extra = [it for it in extra if it[2] not in own][-len(items):]
        pool = sorted(items + extra, key=lambda it: it[2])
        x = np.stack([it[0] for it in pool])
        y = np.array([int(it[1] == cls) for it in pool])
        keys = np.array([it[2] for it in pool])
        name = self.space.class_names[cls]
        try:
            mask = select_features(x, self.sel)
        except SelectionError:
            mask = FeatureMask.full(x.shape[1])
        cfg = dataclasses.replace(self.cfg, seed=self.cfg.seed + cls)
        try:
            committee = train_committee(x, y, cfg, target=cls, keys=keys, columns=mask.indices)
        except CommitteeTrainingError as exc:
            self.failed.add(cls)
            self.buffers[cls] = []
            self.journal.log(index, self.stage, "committee_failed", f"{name}: {exc}")
            return
        self.committees[cls] = committee
        self.failed.discard(cls)
        self.buffers[cls] = []
        acc = ",".join(f"{k}={v:.4f}" for k, v in committee.train_accuracy.items())
        self.journal.log(index, self.stage, f"committee_{why}", f"{name} buffer={len(y)} {acc}")
        self.journal.log(index, self.stage, "mask", f"{name}:{_mask_text(mask)}")


def account(verdict: Verdict, true_class: int, space: LabelSpace) -> dict:
    """Counter increments for one terminal verdict.

    A Stage-4 demotion of a true attack costs FN'' and its Stage-3 outcome may
    add TN', TP' or FP' but never FN'.
    """
    path = verdict.path
    pred = verdict.predicted_class
    truly_attack = space.is_attack(true_class)
    if path == (1, 2, 4):
        return {"tp_dprime": 1} if pred == true_class else {"fp_dprime": 1}
    deltas = {}
    demoted = path == (1, 2, 4, 3)
    if demoted and truly_attack:
        deltas["fn_dprime"] = 1
    said_attack = space.is_attack(pred)
    if said_attack and truly_attack:
        deltas["tp_prime"] = 1
    elif said_attack:
        deltas["fp_prime"] = 1
    elif not truly_attack:
        deltas["tn_prime"] = 1
    elif not demoted:
        deltas["fn_prime"] = 1
    return deltas


def stage_metrics(tallies: StageTallies, space: LabelSpace) -> dict[int, MetricReport]:
    conf = tallies.per_stage_confusion
    m1 = conf[1]
    out = {1: compute_metrics(TotalTallies(int(m1[1, 1]), int(m1[0, 1]), int(m1[0, 0]), int(m1[1, 0])))}
    out[2] = compute_metrics(binary_counts(conf[2], space.normal_id))
    out[3] = compute_metrics(binary_counts(conf[3], space.normal_id))
    m4 = sum(conf[4].values(), np.zeros((2, 2), dtype=np.int64))
    out[4] = compute_metrics(TotalTallies(int(m4[1, 1]), int(m4[0, 1]), int(m4[0, 0]), int(m4[1, 0])))
    return out


def _stage_total(matrix) -> int:
    if isinstance(matrix, dict):
        return int(sum(m.sum() for m in matrix.values()))
    return int(matrix.sum())


@dataclass
class RunResult:
    space: LabelSpace
    verdicts: list[Verdict]
    true_classes: np.ndarray
    stage_tallies: StageTallies
    totals: TotalTallies
    final_metrics: MetricReport
    per_stage_metrics: dict
    per_class: list[ClassRow]
    final_confusion: np.ndarray
    timing: dict
    drift_events: list
    masks: list
    journal: list[str]
    metadata: dict = field(default_factory=dict)

    @property
    def n_records(self) -> int:
        return len(self.verdicts)

    def stage_counts(self) -> dict[int, int]:
        return {s: _stage_total(m) for s, m in self.stage_tallies.per_stage_confusion.items()}

    def trend_flag(self) -> Optional[bool]:
        """Whether stage 1 scores below stages 2 and 3 on ACC, Prec and TPR (informational)."""
        m = self.per_stage_metrics
        vals = []
        for name in ("acc", "prec", "tpr"):
            a, b, c = (getattr(m[s], name) for s in (1, 2, 3))
            if a is None or b is None or c is None:
                return None
            vals.append(a <= b and a <= c)
        return all(vals)


class Pipeline:
    """Routes each flow through the stages and keeps the per-stage bookkeeping.

    Stage objects are pluggable: anything with ``detect``, ``classify``,
    ``observe``/``classify`` and ``verify`` methods of the real stages works,
    which is how the router is fuzzed with stub predictors.
    """

    def __init__(self, space: LabelSpace, config: PipelineConfig = PipelineConfig(),
                 stages: Optional[dict] = None, journal: Optional[Journal] = None):
        self.space = space
        self.config = config
        self.journal = journal or Journal()
        self.stages = stages
        self.tallies = StageTallies.empty(space)
        self.times = {1: 0.0, 2: 0.0, 3: 0.0, 4: 0.0}
        self.verdicts: list[Verdict] = []
        self.true_classes: list[int] = []
        self.history: deque = deque(maxlen=config.stage3.seq_len)
        self.normalizer = OnlineNormalizer() if config.normalize else None

    def build_stages(self, n_features: int) -> dict:
        cfg = self.config
        j = self.journal
        return {
            1: DetectionStage(n_features, self.space, cfg.stage1, cfg.selection, cfg.warmup, j),
            2: ClassificationStage(n_features, self.space, cfg.stage2, cfg.selection, cfg.warmup, j),
            3: SequenceStage(n_features, self.space, cfg.stage3, cfg.selection, cfg.seed, j),
            4: VerificationStage(self.space, dataclasses.replace(cfg.stage4, seed=cfg.seed),
                                 cfg.selection, cfg.stage3.refresh_every, j),
        }

    # -- single-worker path

    def _prepare(self, rec: FlowRecord) -> tuple[FlowRecord, tuple]:
        if self.normalizer is not None:
            rec = self.normalizer.normalize(rec)
        if self.stages is None:
            self.stages = self.build_stages(rec.n_features)
        self.history.append(rec.features)
        return rec, tuple(self.history)

    def route(self, rec: FlowRecord, history: tuple) -> Verdict:
        """Push one (already normalized) record through the stages; returns its terminal verdict."""
        s = self.stages
        conf = self.tallies.per_stage_confusion
        clock = time.perf_counter
        true = rec.true_class
        truly_attack = int(self.space.is_attack(true))

        t0 = clock()
        s[3].observe(rec, history)
        t1 = clock()
        self.times[3] += t1 - t0
        flagged = s[1].detect(rec)
        t2 = clock()
        self.times[1] += t2 - t1
        conf[1][truly_attack, int(flagged)] += 1
        if not flagged:
            return self._sequence(rec, history, (1, 3))
        cls = s[2].classify(rec)
        t3 = clock()
        self.times[2] += t3 - t2
        conf[2][true, cls] += 1
        if not self.space.is_attack(cls):
            return self._sequence(rec, history, (1, 2, 3))
        confirmed = s[4].verify(rec, cls)
        self.times[4] += clock() - t3
        conf[4][cls][int(true == cls), int(confirmed)] += 1
        if confirmed:
            return Verdict(rec.arrival_index, cls, (1, 2, 4))
        return self._sequence(rec, history, (1, 2, 4, 3))

    def _sequence(self, rec, history, path) -> Verdict:
        t0 = time.perf_counter()
        cls = self.stages[3].classify(rec, history)
        self.times[3] += time.perf_counter() - t0
        self.tallies.per_stage_confusion[3][rec.true_class, cls] += 1
        return Verdict(rec.arrival_index, cls, path)

    def _finish_one(self, verdict: Verdict, true_class: int) -> None:
        self.tallies.add(account(verdict, true_class, self.space))
        self.verdicts.append(verdict)
        self.true_classes.append(true_class)

    def run(self, source: Iterable[FlowRecord]) -> RunResult:
        cfg = self.config
        self.journal.log(None, None, "run_start",
                         f"seed={cfg.seed} mode={cfg.mode} rng={RNG_ALGORITHM} normalize={cfg.normalize}")
        start = time.perf_counter()
        if cfg.mode == "concurrent":
            self.journal.log(None, None, "nondeterministic_mode", "stage models may evolve in a different order")
            self._run_concurrent(source)
        else:
            for rec in source:
                rec, history = self._prepare(rec)
                self._finish_one(self.route(rec, history), rec.true_class)
        total = time.perf_counter() - start
        return self._result(total)

    # -- concurrent path

    def _run_concurrent(self, source: Iterable[FlowRecord]) -> None:
        size = self.config.queue_size
        q2, q3, q4 = (queue.Queue(maxsize=size) for _ in range(3))
        q1 = queue.Queue(maxsize=size)
        done = object()
        results: list = []
        lock = threading.Lock()
        conf = self.tallies.per_stage_confusion
        errors: list = []

        def finish(verdict, rec):
            with lock:
                results.append((verdict, rec.true_class))

        def guard(fn):
            def wrapped():
                try:
                    fn()
                except BaseException as exc:  # surfaced after join
                    errors.append(exc)
                    for q in (q2, q3, q4):
                        q.put(done)
            return wrapped

        @guard
        def stage1():
            while (item := q1.get()) is not done:
                rec, hist = item
                t0 = time.perf_counter()
                flagged = self.stages[1].detect(rec)
                self.times[1] += time.perf_counter() - t0
                conf[1][int(self.space.is_attack(rec.true_class)), int(flagged)] += 1
                (q2 if flagged else q3).put(("classify", rec, hist, (1,) if flagged else (1, 3)))
            q2.put(done)
            q3.put(done)

        @guard
        def stage2():
            while (item := q2.get()) is not done:
                _, rec, hist, _ = item
                t0 = time.perf_counter()
                cls = self.stages[2].classify(rec)
                self.times[2] += time.perf_counter() - t0
                conf[2][rec.true_class, cls] += 1
                if self.space.is_attack(cls):
                    q4.put((rec, hist, cls))
                else:
                    q3.put(("classify", rec, hist, (1, 2, 3)))
            q4.put(done)
            q3.put(done)

        @guard
        def stage4():
            while (item := q4.get()) is not done:
                rec, hist, cls = item
                t0 = time.perf_counter()
                confirmed = self.stages[4].verify(rec, cls)
                self.times[4] += time.perf_counter() - t0
                conf[4][cls][int(rec.true_class == cls), int(confirmed)] += 1
                if confirmed:
                    finish(Verdict(rec.arrival_index, cls, (1, 2, 4)), rec)
                else:
                    q3.put(("classify", rec, hist, (1, 2, 4, 3)))
            q3.put(done)

        @guard
        def stage3():
            pending = 4  # ingest, stage 1, stage 2, stage 4
            while pending:
                item = q3.get()
                if item is done:
                    pending -= 1
                    continue
                kind, rec, hist, path = item
                t0 = time.perf_counter()
                if kind == "observe":
                    self.stages[3].observe(rec, hist)
                    self.times[3] += time.perf_counter() - t0
                    continue
                cls = self.stages[3].classify(rec, hist)
                self.times[3] += time.perf_counter() - t0
                conf[3][rec.true_class, cls] += 1
                finish(Verdict(rec.arrival_index, cls, path), rec)

        workers = [threading.Thread(target=fn, daemon=True) for fn in (stage1, stage2, stage4, stage3)]
        started = False
        try:
            for rec in source:
                rec, hist = self._prepare(rec)
                if not started:
                    for w in workers:
                        w.start()
                    started = True
                q3.put(("observe", rec, hist, None))
                q1.put((rec, hist))
                if errors:
                    break
        finally:
            if started:
                q1.put(done)
                q3.put(done)
                for w in workers:
                    w.join()
        if errors:
            raise errors[0]
        for verdict, true in sorted(results, key=lambda r: r[0].record_ref):
            self._finish_one(verdict, true)

    # -- result assembly

    def _result(self, total_seconds: float) -> RunResult:
        space = self.space
        k = space.n_classes
        true = np.asarray(self.true_classes, dtype=np.intp)
        pred = np.array([v.predicted_class for v in self.verdicts], dtype=np.intp)
        final = np.zeros((k, k), dtype=np.int64)
        np.add.at(final, (true, pred), 1)
        totals = aggregate_totals(self.tallies)
        drift, masks = [], []
        if self.stages is not None:
            for sid in (1, 2):
                st = self.stages[sid]
                drift.extend((sid, ev) for ev in getattr(st, "drift_events", []))
                masks.extend((sid, idx, m) for idx, m in getattr(st, "masks", []))
        timing = {f"stage{s}": self.times[s] for s in (1, 2, 3, 4)}
        timing["total"] = max(total_seconds, *timing.values())
        self.journal.log(None, None, "run_end", f"records={len(self.verdicts)}")
        return RunResult(
            space=space,
            verdicts=list(self.verdicts),
            true_classes=true,
            stage_tallies=self.tallies,
            totals=totals,
            final_metrics=compute_metrics(totals),
            per_stage_metrics=stage_metrics(self.tallies, space),
            per_class=per_class_report(final, space),
            final_confusion=final,
            timing=timing,
            drift_events=drift,
            masks=masks,
            journal=list(self.journal.lines),
            metadata={"seed": self.config.seed, "mode": self.config.mode, "rng": RNG_ALGORITHM},
        )


def run(source: Iterable[FlowRecord], space: LabelSpace, config: PipelineConfig = PipelineConfig(),
        stages: Optional[dict] = None) -> RunResult:
    return Pipeline(space, config, stages).run(source)
