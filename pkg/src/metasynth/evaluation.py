"""Human-evaluation protocol: three-way relevance ballots from independent
evaluators, hard-vote aggregation, and model reports by relevance class.

Each task needs ballots from three distinct evaluators; a strict majority
decides the final label and a three-way split falls back to the middle
label.  Raw evaluator ids never touch disk: they are salted-hashed at the
store boundary, and the append-only ballot log replays to identical
aggregates after a restart.
"""
from __future__ import annotations

import hashlib
import json
import logging
import secrets
import threading
from collections import Counter
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from .corpus import Corpus
from . import metrics

log = logging.getLogger(__name__)

REQUIRED_BALLOTS = 3


class RelevanceLabel(str, Enum):
    REL = "REL"
    SWR = "SWR"
    IRL = "IRL"


class EvaluationError(ValueError):
    pass


class UnknownTaskError(EvaluationError):
    pass


class UnknownEvaluatorError(EvaluationError):
    pass


class DuplicateBallotError(EvaluationError):
    pass


class TaskCompleteError(EvaluationError):
    pass


@dataclass
class EvaluationTask:
    id: str
    job_ref: str
    generated_text: str
    ground_truth_text: str
    support_preview: tuple[str, ...] = ()
    required_ballots: int = REQUIRED_BALLOTS
    state: str = "open"


@dataclass(frozen=True)
class EvaluationBallot:
    task_id: str
    evaluator_id: str  # salted hash, never the raw id
    label: RelevanceLabel
    submitted_at: str


@dataclass(frozen=True)
class ModelReport:
    model_tag: str
    total_tasks: int
    rel_pct: float
    swr_pct: float
    irl_pct: float
    bleu_by_class: dict
    rouge_by_class: dict
    swgt_pct: float


def _job_fields(job) -> tuple[str, str, str | None]:
    if isinstance(job, dict):
        return job["record_id"], job.get("status", ""), job.get("output")
    return job.record_id, job.status, job.output


def create_tasks(jobs, corpus: Corpus) -> list[EvaluationTask]:
    """One open task per done job, ground truth attached from the corpus.

    Jobs that are not done (or produced no output) are skipped with a
    warning so a partially failed batch can still be evaluated.
    """
    tasks: list[EvaluationTask] = []
    seen: set[str] = set()
    for job in jobs:
        record_id, status, output = _job_fields(job)
        if record_id in seen:
            raise EvaluationError(f"duplicate job for record {record_id!r}")
        seen.add(record_id)
        if status != "done" or not output:
            log.warning("skipping job %s with status %r", record_id, status)
            continue
        try:
            record = corpus.by_id(record_id)
        except KeyError as exc:
            raise EvaluationError(f"job references missing record {record_id!r}") from exc
        tasks.append(
            EvaluationTask(
                id=f"t-{record_id}",
                job_ref=record_id,
                generated_text=output,
                ground_truth_text=record.meta_abstract,
                support_preview=tuple(s.text for s in record.supports),
            )
        )
    return tasks


def aggregate_labels(
    labels: list[RelevanceLabel], tie_label: RelevanceLabel = RelevanceLabel.SWR
) -> RelevanceLabel:
    """Hard vote: the label with a strict majority, or ``tie_label`` on a
    split.  Invariant under ballot permutation by construction."""
    counts = Counter(labels)
    winner, votes = counts.most_common(1)[0]
    if 2 * votes > len(labels):
        return winner
    return tie_label


class TaskStore:
    """Task pool with ballot collection, aggregation, and durable replay."""

    def __init__(
        self,
        tasks: list[EvaluationTask] | None = None,
        required_ballots: int = REQUIRED_BALLOTS,
        tie_label: RelevanceLabel = RelevanceLabel.SWR,
        log_path: str | Path | None = None,
        salt: str | None = None,
        roster: set[str] | None = None,
    ):
        self.required_ballots = required_ballots
        self.tie_label = tie_label
        self.salt = salt if salt is not None else secrets.token_hex(8)
        self.roster = roster
        self._tasks: dict[str, EvaluationTask] = {}
        for t in tasks or []:
            if t.id in self._tasks:
                raise EvaluationError(f"duplicate task id {t.id!r}")
            t.required_ballots = required_ballots
            self._tasks[t.id] = t
        self._ballots: dict[str, dict[str, EvaluationBallot]] = {
            tid: {} for tid in self._tasks
        }
        self._lock = threading.Lock()
        self._log_path = Path(log_path) if log_path else None
        self._log_fh = None
        if self._log_path is not None:
            if self._log_path.exists():
                self._replay_log()
            self._log_fh = self._log_path.open("a", encoding="utf-8")

    # -- evaluator identity -------------------------------------------------

    def evaluator_key(self, evaluator_id: str) -> str:
        """Salted hash of the raw id; the only form ever stored or logged."""
        if not evaluator_id or not evaluator_id.strip():
            raise UnknownEvaluatorError("evaluator id is blank")
        if self.roster is not None and evaluator_id not in self.roster:
            raise UnknownEvaluatorError(f"evaluator {evaluator_id!r} not in roster")
        return hashlib.sha256(f"{self.salt}:{evaluator_id}".encode("utf-8")).hexdigest()[:16]

    # -- task flow ----------------------------------------------------------

    def task(self, task_id: str) -> EvaluationTask:
        try:
            return self._tasks[task_id]
        except KeyError:
            raise UnknownTaskError(f"unknown task {task_id!r}") from None

    def tasks(self) -> list[EvaluationTask]:
        return list(self._tasks.values())

    def next_task(self, evaluator_id: str) -> EvaluationTask | None:
        """An open task this evaluator has not balloted, fewest ballots first."""
        key = self.evaluator_key(evaluator_id)
        with self._lock:
            candidates = [
                t
                for t in self._tasks.values()
                if t.state == "open" and key not in self._ballots[t.id]
            ]
            if not candidates:
                return None
            return min(candidates, key=lambda t: (len(self._ballots[t.id]), t.id))

    def submit_ballot(
        self, task_id: str, evaluator_id: str, label: RelevanceLabel | str
    ) -> str:
        """Persist one ballot atomically; returns the task's new state."""
        label = RelevanceLabel(label)
        key = self.evaluator_key(evaluator_id)
        with self._lock:
            task = self.task(task_id)
            if task.state == "complete":
                raise TaskCompleteError(f"task {task_id!r} already complete")
            if key in self._ballots[task_id]:
                raise DuplicateBallotError(
                    f"evaluator already balloted task {task_id!r}"
                )
            ballot = EvaluationBallot(
                task_id=task_id,
                evaluator_id=key,
                label=label,
                submitted_at=datetime.now(timezone.utc).isoformat(),
            )
            self._ballots[task_id][key] = ballot
            self._append_log(ballot)
            if len(self._ballots[task_id]) >= task.required_ballots:
                task.state = "complete"
            return task.state

    def ballots_for(self, task_id: str) -> list[EvaluationBallot]:
        return list(self._ballots[self.task(task_id).id].values())

    def aggregate(self, task_id: str) -> RelevanceLabel:
        task = self.task(task_id)
        if task.state != "complete":
            raise EvaluationError(f"task {task_id!r} is not complete")
        labels = [b.label for b in self._ballots[task_id].values()]
        return aggregate_labels(labels, self.tie_label)

    def progress(self) -> dict:
        with self._lock:
            return {
                "open": sum(1 for t in self._tasks.values() if t.state == "open"),
                "complete": sum(
                    1 for t in self._tasks.values() if t.state == "complete"
                ),
                "ballots_total": sum(len(b) for b in self._ballots.values()),
            }

    # -- persistence ----------------------------------------------------------

    def _append_log(self, ballot: EvaluationBallot) -> None:
        if self._log_fh is None:
            return
        row = {
            "task_id": ballot.task_id,
            "evaluator": ballot.evaluator_id,
            "label": ballot.label.value,
            "submitted_at": ballot.submitted_at,
        }
        self._log_fh.write(json.dumps(row) + "\n")
        self._log_fh.flush()

    def _replay_log(self) -> None:
        with self._log_path.open("r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    ballot = EvaluationBallot(
                        task_id=row["task_id"],
                        evaluator_id=row["evaluator"],
                        label=RelevanceLabel(row["label"]),
                        submitted_at=row["submitted_at"],
                    )
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise EvaluationError(
                        f"{self._log_path}:{lineno}: corrupt ballot log ({exc})"
                    ) from exc
                task = self.task(ballot.task_id)
                if ballot.evaluator_id in self._ballots[task.id]:
                    raise EvaluationError(
                        f"{self._log_path}:{lineno}: duplicate ballot in log"
                    )
                self._ballots[task.id][ballot.evaluator_id] = ballot
                if len(self._ballots[task.id]) >= task.required_ballots:
                    task.state = "complete"

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    def save_tasks(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as f:
            meta = {
                "kind": "meta",
                "salt": self.salt,
                "required_ballots": self.required_ballots,
                "tie_label": self.tie_label.value,
            }
            f.write(json.dumps(meta) + "\n")
            for t in self._tasks.values():
                row = {"kind": "task", **asdict(t)}
                row["support_preview"] = list(t.support_preview)
                f.write(json.dumps(row, ensure_ascii=False) + "\n")

    @classmethod
    def load(
        cls, tasks_path: str | Path, log_path: str | Path | None = None
    ) -> "TaskStore":
        tasks: list[EvaluationTask] = []
        meta: dict = {}
        with Path(tasks_path).open("r", encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                row = json.loads(line)
                if row.get("kind") == "meta":
                    meta = row
                    continue
                row.pop("kind", None)
                row["support_preview"] = tuple(row.get("support_preview", ()))
                row["state"] = "open"  # ballots decide; the log replays state
                tasks.append(EvaluationTask(**row))
        return cls(
            tasks=tasks,
            required_ballots=meta.get("required_ballots", REQUIRED_BALLOTS),
            tie_label=RelevanceLabel(meta.get("tie_label", "SWR")),
            log_path=log_path,
            salt=meta.get("salt"),
        )


def build_report(
    model_tag: str,
    store: TaskStore,
    embedder,
) -> ModelReport:
    """Table-shaped report: final-label percentages, BLEU/ROUGE by relevance
    class, and mean similarity with ground truth over all tasks."""
    tasks = store.tasks()
    if not tasks:
        raise EvaluationError("no tasks to report on")
    incomplete = [t.id for t in tasks if t.state != "complete"]
    if incomplete:
        raise EvaluationError(
            f"incomplete tasks present ({len(incomplete)} of {len(tasks)})"
        )

    finals = {t.id: store.aggregate(t.id) for t in tasks}
    counts = Counter(finals.values())
    total = len(tasks)

    def pct(label: RelevanceLabel) -> float:
        return round(100.0 * counts.get(label, 0) / total, 1)

    by_class: dict[str, list[EvaluationTask]] = {"relevant": [], "irrelevant": []}
    for t in tasks:
        if finals[t.id] is RelevanceLabel.REL:
            by_class["relevant"].append(t)
        elif finals[t.id] is RelevanceLabel.IRL:
            by_class["irrelevant"].append(t)

    bleu_by_class: dict = {}
    rouge_by_class: dict = {}
    for name, members in by_class.items():
        if not members:
            bleu_by_class[name] = None
            rouge_by_class[name] = None
            continue
        bleus, r1s, r2s, rls = [], [], [], []
        for t in members:
            bleus.append(metrics.bleu(t.generated_text, [t.ground_truth_text]))
            r1s.append(metrics.rouge_n(t.generated_text, t.ground_truth_text, 1).f1)
            r2s.append(metrics.rouge_n(t.generated_text, t.ground_truth_text, 2).f1)
            rls.append(metrics.rouge_l(t.generated_text, t.ground_truth_text).f1)
        bleu_by_class[name] = sum(bleus) / len(bleus)
        rouge_by_class[name] = {
            "rouge1": sum(r1s) / len(r1s),
            "rouge2": sum(r2s) / len(r2s),
            "rougeL": sum(rls) / len(rls),
        }

    swgt_values = [
        metrics.swgt(t.generated_text, t.ground_truth_text, embedder) for t in tasks
    ]
    return ModelReport(
        model_tag=model_tag,
        total_tasks=total,
        rel_pct=pct(RelevanceLabel.REL),
        swr_pct=pct(RelevanceLabel.SWR),
        irl_pct=pct(RelevanceLabel.IRL),
        bleu_by_class=bleu_by_class,
        rouge_by_class=rouge_by_class,
        swgt_pct=sum(swgt_values) / len(swgt_values),
    )
