"""HTTP API over the evaluation task store, plus the static annotation console.

Routes mirror the documented surface exactly; the console is served as
static assets and talks only to these endpoints.
"""
from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .evaluation import (
    DuplicateBallotError,
    EvaluationError,
    RelevanceLabel,
    TaskCompleteError,
    TaskStore,
    UnknownEvaluatorError,
    UnknownTaskError,
    build_report,
)
from .vector_index import HashingEmbedder


class BallotIn(BaseModel):
    task_id: str
    evaluator: str
    label: str


def create_app(
    store: TaskStore,
    readonly: bool = False,
    model_tag: str = "run",
    embedder=None,
    console_dir: str | Path | None = None,
) -> FastAPI:
    embedder = embedder or HashingEmbedder()
    app = FastAPI(title="metasynth evaluation api")

    @app.get("/api/tasks/next")
    def next_task(evaluator: str = Query(...)):
        try:
            task = store.next_task(evaluator)
        except UnknownEvaluatorError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if task is None:
            return Response(status_code=204)
        return {
            "id": task.id,
            "generated_text": task.generated_text,
            "ground_truth_text": task.ground_truth_text,
            "support_preview": list(task.support_preview),
        }

    @app.post("/api/ballots", status_code=201)
    def post_ballot(ballot: BallotIn):
        if readonly:
            raise HTTPException(status_code=403, detail="server is read-only")
        try:
            label = RelevanceLabel(ballot.label)
        except ValueError:
            raise HTTPException(
                status_code=422, detail="label must be one of REL, SWR, IRL"
            )
        try:
            state = store.submit_ballot(ballot.task_id, ballot.evaluator, label)
        except UnknownTaskError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (DuplicateBallotError, TaskCompleteError) as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except UnknownEvaluatorError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"task_id": ballot.task_id, "state": state}

    @app.get("/api/reports/{tag}")
    def report(tag: str):
        try:
            return asdict(build_report(tag, store, embedder))
        except EvaluationError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.get("/api/progress")
    def progress():
        return store.progress()

    if console_dir is not None and Path(console_dir).is_dir():
        app.mount(
            "/", StaticFiles(directory=str(console_dir), html=True), name="console"
        )
    return app
