"""HTTP API over the annotation task store, plus static hosting for the
browser frontend.

Endpoints:
    POST /tasks                       create a batch of tasks
    GET  /tasks/next?annotator=ID     lease the next open task
    POST /labels                      submit a label
    GET  /reports/agreement?kind=...  agreement statistics (qc | pref)
    GET  /export/preferences          de-randomized preference records

Annotators authenticate with static tokens from the config
(``X-Annotator-Token`` header); with no tokens configured the service is
open, which is the mode the test suite uses.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from .annotation import AnnotationError, PrefTask, QCTask, TaskStore


class QCTaskIn(BaseModel):
    kind: str = Field(pattern="^qc$")
    task_id: str
    serialized_tables: list[str] = []
    question: str
    insight: str


class PrefTaskIn(BaseModel):
    kind: str = Field(pattern="^pref$")
    task_id: str
    question: str
    model_a: str
    insight_a: str
    model_b: str
    insight_b: str
    serialized_tables: list[str] = []


class TaskBatchIn(BaseModel):
    tasks: list[QCTaskIn | PrefTaskIn]


class LabelIn(BaseModel):
    task_id: str
    annotator_id: str
    values: dict


class SeedCandidateIn(BaseModel):
    id: str
    question: str
    question_type: str


class SeedCandidateBatchIn(BaseModel):
    candidates: list[SeedCandidateIn]


class SeedDecisionIn(BaseModel):
    candidate_id: str
    accept: bool


def create_app(
    store: TaskStore,
    tokens: Mapping[str, str] | None = None,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="annotation service")
    tokens = dict(tokens or {})

    def check_annotator(request: Request, annotator_id: str) -> None:
        if not tokens:
            return
        token = request.headers.get("X-Annotator-Token", "")
        if tokens.get(annotator_id) != token:
            raise HTTPException(status_code=401, detail="invalid annotator token")

    @app.exception_handler(AnnotationError)
    async def annotation_error_handler(request: Request, exc: AnnotationError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.post("/tasks")
    def create_tasks(batch: TaskBatchIn) -> dict:
        tasks = []
        for item in batch.tasks:
            if item.kind == "qc":
                tasks.append(
                    QCTask(
                        task_id=item.task_id,
                        serialized_tables=tuple(item.serialized_tables),
                        question=item.question,
                        insight=item.insight,
                    )
                )
            else:
                tasks.append(
                    PrefTask(
                        task_id=item.task_id,
                        question=item.question,
                        model_a=item.model_a,
                        insight_a=item.insight_a,
                        model_b=item.model_b,
                        insight_b=item.insight_b,
                        serialized_tables=tuple(item.serialized_tables),
                    )
                )
        return {"created": store.create_tasks(tasks)}

    @app.get("/tasks/next")
    def next_task(request: Request, annotator: str = Query(...)) -> dict:
        check_annotator(request, annotator)
        payload = store.next_task(annotator)
        if payload is None:
            return {"task": None, "queue": store.counts()}
        return {"task": payload, "queue": store.counts()}

    @app.post("/labels")
    def submit_label(label: LabelIn, request: Request) -> dict:
        check_annotator(request, label.annotator_id)
        return store.submit_label(label.annotator_id, label.task_id, label.values)

    @app.get("/reports/agreement")
    def agreement(kind: str = Query(...)) -> dict:
        return store.agreement_report(kind)

    @app.get("/export/preferences")
    def export_preferences() -> PlainTextResponse:
        import json

        lines = [json.dumps(rec, ensure_ascii=False) for rec in store.export_preferences()]
        return PlainTextResponse("\n".join(lines) + ("\n" if lines else ""), media_type="application/jsonl")

    @app.post("/seeds/candidates")
    def add_seed_candidates(batch: SeedCandidateBatchIn) -> dict:
        return {"queued": store.add_seed_candidates([c.model_dump() for c in batch.candidates])}

    @app.get("/seeds/candidates")
    def pending_seed_candidates() -> dict:
        return {"candidates": store.pending_seed_candidates()}

    @app.post("/seeds/decisions")
    def decide_seed(decision: SeedDecisionIn) -> dict:
        store.decide_seed(decision.candidate_id, decision.accept)
        return {"accepted": decision.accept}

    @app.get("/seeds/accepted")
    def accepted_seeds() -> dict:
        return {"seeds": store.accepted_seeds()}

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
