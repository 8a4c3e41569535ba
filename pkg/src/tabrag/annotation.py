"""Task queue and label store for the two human workflows: six-criteria
quality-control ratings and pairwise preference labeling.

State lives in an append-only JSONL journal (one event per line, flushed on
write); the in-memory view is rebuilt by replay on open.  All mutations go
through a single lock.
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .stats import cohens_kappa, percent_agreement

QC_CRITERIA = (
    "Inter-Table Relevance",
    "Table-Question Relevance",
    "Question Complexity",
    "Question Meaningfulness",
    "Question-Insight Completeness",
    "Table-Insight Faithfulness",
)

PREF_DIMENSIONS = ("faithfulness", "completeness")
PREF_VALUES = {"win": 1, "tie": 0, "loss": -1}

DEFAULT_LEASE_S = 30 * 60
DEFAULT_REQUIRED_ANNOTATORS = 2


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class QCTask:
    task_id: str
    serialized_tables: tuple[str, ...]
    question: str
    insight: str

    kind = "qc"


@dataclass(frozen=True)
class PrefTask:
    """Pairwise preference task; annotators see only left/right."""

    task_id: str
    question: str
    model_a: str
    insight_a: str
    model_b: str
    insight_b: str
    serialized_tables: tuple[str, ...] = ()

    kind = "pref"


@dataclass(frozen=True)
class LabelRecord:
    task_id: str
    annotator_id: str
    values: Mapping
    submitted_at: float


@dataclass
class _TaskState:
    task: QCTask | PrefTask
    created_seq: int
    flipped: bool = False  # pref only: True when left shows model_b
    labels: dict[str, LabelRecord] = field(default_factory=dict)
    lease_annotator: str | None = None
    lease_expires: float = 0.0
    closed: bool = False


def _validate_qc_values(values: Mapping) -> dict:
    if set(values) != set(QC_CRITERIA):
        raise AnnotationError(f"QC label must rate exactly the criteria {list(QC_CRITERIA)}")
    out = {}
    for criterion, score in values.items():
        if not isinstance(score, int) or not 1 <= score <= 5:
            raise AnnotationError(f"score for {criterion!r} must be an integer in 1..5")
        out[criterion] = score
    return out


def _validate_pref_values(values: Mapping) -> dict:
    if set(values) != set(PREF_DIMENSIONS):
        raise AnnotationError(
            f"preference label must cover both dimensions {list(PREF_DIMENSIONS)}"
        )
    out = {}
    for dim, choice in values.items():
        if choice not in PREF_VALUES:
            raise AnnotationError(f"{dim} must be one of {sorted(PREF_VALUES)}")
        out[dim] = choice
    return out


class TaskStore:
    def __init__(
        self,
        journal_path: str | Path,
        required_annotators: int = DEFAULT_REQUIRED_ANNOTATORS,
        lease_s: float = DEFAULT_LEASE_S,
        randomize_seed: int = 0,
        clock: Callable[[], float] = time.time,
    ):
        self.journal_path = Path(journal_path)
        self.required_annotators = required_annotators
        self.lease_s = lease_s
        self.randomize_seed = randomize_seed
        self.clock = clock
        self._lock = threading.Lock()
        self._tasks: dict[str, _TaskState] = {}
        self._seed_candidates: dict[str, dict] = {}
        self._seq = 0
        self.journal_path.parent.mkdir(parents=True, exist_ok=True)
        if self.journal_path.exists():
            self._replay()
        self._journal = self.journal_path.open("a", encoding="utf-8")

    # -- persistence --------------------------------------------------------

    def _append(self, event: dict) -> None:
        self._journal.write(json.dumps(event, ensure_ascii=False) + "\n")
        self._journal.flush()

    def _replay(self) -> None:
        with self.journal_path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self._apply(json.loads(line))

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "seed_candidates":
            for cand in event["candidates"]:
                self._seed_candidates[cand["id"]] = {
                    "id": cand["id"],
                    "question": cand["question"],
                    "question_type": cand["question_type"],
                    "decision": None,
                }
        elif kind == "seed_decision":
            self._seed_candidates[event["id"]]["decision"] = event["decision"]
        elif kind == "create":
            task = _task_from_dict(event["task"])
            self._seq += 1
            self._tasks[task.task_id] = _TaskState(
                task=task, created_seq=self._seq, flipped=event.get("flipped", False)
            )
        elif kind == "lease":
            state = self._tasks[event["task_id"]]
            state.lease_annotator = event["annotator_id"]
            state.lease_expires = event["expires"]
        elif kind == "label":
            state = self._tasks[event["task_id"]]
            record = LabelRecord(
                task_id=event["task_id"],
                annotator_id=event["annotator_id"],
                values=event["values"],
                submitted_at=event["submitted_at"],
            )
            state.labels[record.annotator_id] = record
            state.lease_annotator = None
            if len(state.labels) >= self.required_annotators:
                state.closed = True

    # -- operations ----------------------------------------------------------

    def create_tasks(self, batch: Sequence[QCTask | PrefTask]) -> int:
        """Persist tasks in state open; preference left/right order is
        randomized here with a recorded seed."""
        with self._lock:
            duplicate = [t.task_id for t in batch if t.task_id in self._tasks]
            seen = set()
            for t in batch:
                if t.task_id in seen:
                    duplicate.append(t.task_id)
                seen.add(t.task_id)
            if duplicate:
                raise AnnotationError(f"duplicate task ids: {sorted(set(duplicate))}")
            for task in batch:
                flipped = False
                if task.kind == "pref":
                    rng = random.Random(f"{self.randomize_seed}:{task.task_id}")
                    flipped = rng.random() < 0.5
                event = {"event": "create", "task": _task_to_dict(task), "flipped": flipped}
                self._append(event)
                self._apply(event)
            return len(batch)

    def next_task(self, annotator_id: str) -> dict | None:
        """Lease the oldest open task this annotator has not labeled and
        nobody else currently holds; None when the queue is drained."""
        now = self.clock()
        with self._lock:
            candidates = sorted(self._tasks.values(), key=lambda s: s.created_seq)
            for state in candidates:
                if state.closed or annotator_id in state.labels:
                    continue
                lease_active = (
                    state.lease_annotator is not None
                    and state.lease_annotator != annotator_id
                    and state.lease_expires > now
                )
                if lease_active:
                    continue
                expires = now + self.lease_s
                event = {
                    "event": "lease",
                    "task_id": state.task.task_id,
                    "annotator_id": annotator_id,
                    "expires": expires,
                }
                self._append(event)
                self._apply(event)
                return self._payload(state)
            return None

    def _payload(self, state: _TaskState) -> dict:
        """What the annotator sees; never includes model identities."""
        task = state.task
        if task.kind == "qc":
            return {
                "task_id": task.task_id,
                "kind": "qc",
                "tables": list(task.serialized_tables),
                "question": task.question,
                "insight": task.insight,
                "criteria": list(QC_CRITERIA),
            }
        left, right = (
            (task.insight_b, task.insight_a) if state.flipped else (task.insight_a, task.insight_b)
        )
        return {
            "task_id": task.task_id,
            "kind": "pref",
            "tables": list(task.serialized_tables),
            "question": task.question,
            "insight_left": left,
            "insight_right": right,
            "dimensions": list(PREF_DIMENSIONS),
        }

    def submit_label(self, annotator_id: str, task_id: str, values: Mapping) -> dict:
        """Record a complete, in-range label under a valid lease; the task
        closes once the required number of annotators have labeled it."""
        now = self.clock()
        with self._lock:
            state = self._tasks.get(task_id)
            if state is None:
                raise AnnotationError(f"unknown task {task_id!r}")
            if state.closed:
                raise AnnotationError(f"task {task_id!r} is closed")
            if annotator_id in state.labels:
                raise AnnotationError(f"annotator {annotator_id!r} already labeled {task_id!r}")
            if state.lease_annotator != annotator_id or state.lease_expires <= now:
                raise AnnotationError(f"no valid lease on {task_id!r} for {annotator_id!r}")
            if state.task.kind == "qc":
                clean = _validate_qc_values(values)
            else:
                clean = _validate_pref_values(values)
            event = {
                "event": "label",
                "task_id": task_id,
                "annotator_id": annotator_id,
                "values": clean,
                "submitted_at": now,
            }
            self._append(event)
            self._apply(event)
            return {"accepted": True, "closed": self._tasks[task_id].closed}

    # -- reporting -----------------------------------------------------------

    def _doubly_labeled(self, kind: str) -> list[_TaskState]:
        return [
            s
            for s in sorted(self._tasks.values(), key=lambda s: s.created_seq)
            if s.task.kind == kind and len(s.labels) >= 2
        ]

    def agreement_report(self, kind: str, bootstrap_seed: int = 13) -> dict:
        """Per criterion/dimension agreement over the first two annotators of
        each doubly-labeled task."""
        with self._lock:
            states = self._doubly_labeled(kind)
        if not states:
            raise AnnotationError(f"no doubly-labeled {kind} tasks yet")
        report: dict = {"kind": kind, "n_tasks": len(states), "per_criterion": {}}
        if kind == "qc":
            names = QC_CRITERIA
        elif kind == "pref":
            names = PREF_DIMENSIONS
        else:
            raise AnnotationError(f"unknown task kind {kind!r}")
        for name in names:
            a_vals, b_vals = [], []
            for state in states:
                first, second = sorted(state.labels)[:2]
                a_vals.append(state.labels[first].values[name])
                b_vals.append(state.labels[second].values[name])
            entry = {
                "percent_agreement": percent_agreement(a_vals, b_vals),
            }
            try:
                kappa = cohens_kappa(a_vals, b_vals, seed=bootstrap_seed)
                entry["kappa"] = kappa.kappa
                entry["kappa_ci"] = [kappa.ci_low, kappa.ci_high]
            except Exception as exc:
                entry["kappa"] = None
                entry["kappa_error"] = str(exc)
            if kind == "qc":
                entry["pct_mean_score_ge_4"] = 100.0 * sum(
                    1 for x, y in zip(a_vals, b_vals) if (x + y) / 2 >= 4
                ) / len(a_vals)
            report["per_criterion"][name] = entry
        if kind == "pref":
            report["vectors"] = self.export_preferences()
        return report

    def export_preferences(self) -> list[dict]:
        """Closed preference labels with left/right de-randomized back to the
        canonical (model_a, model_b) orientation."""
        out = []
        with self._lock:
            states = [
                s
                for s in sorted(self._tasks.values(), key=lambda s: s.created_seq)
                if s.task.kind == "pref" and s.closed
            ]
        for state in states:
            for annotator_id in sorted(state.labels):
                record = state.labels[annotator_id]
                for dim in PREF_DIMENSIONS:
                    value = PREF_VALUES[record.values[dim]]
                    if state.flipped:
                        value = -value
                    out.append(
                        {
                            "pair_id": state.task.task_id,
                            "dimension": dim,
                            "annotator_id": annotator_id,
                            "value": value,
                        }
                    )
        return out

    # -- seed review ----------------------------------------------------------

    def add_seed_candidates(self, candidates: Sequence[Mapping]) -> int:
        """Queue construction-pipeline question candidates for human review."""
        with self._lock:
            duplicate = [c["id"] for c in candidates if c["id"] in self._seed_candidates]
            if duplicate:
                raise AnnotationError(f"duplicate seed candidate ids: {sorted(duplicate)}")
            event = {
                "event": "seed_candidates",
                "candidates": [
                    {
                        "id": c["id"],
                        "question": c["question"],
                        "question_type": c["question_type"],
                    }
                    for c in candidates
                ],
            }
            self._append(event)
            self._apply(event)
            return len(candidates)

    def pending_seed_candidates(self) -> list[dict]:
        with self._lock:
            return [dict(c) for c in self._seed_candidates.values() if c["decision"] is None]

    def decide_seed(self, candidate_id: str, accept: bool) -> None:
        with self._lock:
            cand = self._seed_candidates.get(candidate_id)
            if cand is None:
                raise AnnotationError(f"unknown seed candidate {candidate_id!r}")
            if cand["decision"] is not None:
                raise AnnotationError(f"seed candidate {candidate_id!r} already decided")
            event = {
                "event": "seed_decision",
                "id": candidate_id,
                "decision": "accepted" if accept else "rejected",
            }
            self._append(event)
            self._apply(event)

    def accepted_seeds(self) -> list[dict]:
        """Accepted (question, type) pairs, the refine-seeds payload."""
        with self._lock:
            return [
                {"question": c["question"], "question_type": c["question_type"]}
                for c in self._seed_candidates.values()
                if c["decision"] == "accepted"
            ]

    def counts(self) -> dict:
        with self._lock:
            total = len(self._tasks)
            closed = sum(1 for s in self._tasks.values() if s.closed)
            pending_seeds = sum(
                1 for c in self._seed_candidates.values() if c["decision"] is None
            )
        return {"total": total, "closed": closed, "open": total - closed,
                "pending_seeds": pending_seeds}

    def close(self) -> None:
        self._journal.close()


def _task_to_dict(task: QCTask | PrefTask) -> dict:
    if task.kind == "qc":
        return {
            "kind": "qc",
            "task_id": task.task_id,
            "serialized_tables": list(task.serialized_tables),
            "question": task.question,
            "insight": task.insight,
        }
    return {
        "kind": "pref",
        "task_id": task.task_id,
        "question": task.question,
        "model_a": task.model_a,
        "insight_a": task.insight_a,
        "model_b": task.model_b,
        "insight_b": task.insight_b,
        "serialized_tables": list(task.serialized_tables),
    }


def _task_from_dict(rec: dict) -> QCTask | PrefTask:
    if rec["kind"] == "qc":
        return QCTask(
            task_id=rec["task_id"],
            serialized_tables=tuple(rec["serialized_tables"]),
            question=rec["question"],
            insight=rec["insight"],
        )
    return PrefTask(
        task_id=rec["task_id"],
        question=rec["question"],
        model_a=rec["model_a"],
        insight_a=rec["insight_a"],
        model_b=rec["model_b"],
        insight_b=rec["insight_b"],
        serialized_tables=tuple(rec.get("serialized_tables", ())),
    )
