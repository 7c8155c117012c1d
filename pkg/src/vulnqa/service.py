"""HTTP API over the query engine: interactive queries and evaluation runs."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .backends import BackendConfig, ProviderKind, default_backend_configs
from .corpus import read_corpus_file
from .engine import QueryEngine, UnknownBackend
from .evalkit import run_evaluation, write_report
from .prompting import DEFAULT_TEMPLATE, load_template
from .retrieval import load_index


@dataclass
class ServiceConfig:
    corpus_path: str
    index_path: str
    listen_host: str = "127.0.0.1"
    listen_port: int = 8000
    default_backend: str = "extractor"
    default_k: int = 3
    template_path: str | None = None
    budget: int | None = None
    reports_dir: str = "reports"
    cors_origins: list[str] = field(default_factory=lambda: ["*"])
    backends: dict[str, BackendConfig] = field(default_factory=default_backend_configs)

    def validate_paths(self) -> None:
        # Fail fast at startup rather than 500ing on the first query.
        for label, path in (("corpus", self.corpus_path), ("index", self.index_path)):
            if not Path(path).is_file():
                raise FileNotFoundError(f"{label} path does not exist: {path}")
        if self.template_path and not Path(self.template_path).is_file():
            raise FileNotFoundError(f"template path does not exist: {self.template_path}")


def load_service_config(path: str | Path) -> ServiceConfig:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    backends = default_backend_configs()
    for entry in payload.get("backends", []):
        config = BackendConfig(
            backend_id=entry["backend_id"],
            provider_kind=ProviderKind(entry["provider_kind"]),
            model_name=entry.get("model_name", ""),
            endpoint_url=entry.get("endpoint_url", ""),
            api_key_env_var=entry.get("api_key_env_var", ""),
            context_window_tokens=entry.get("context_window_tokens", 128_000),
            price_per_1m_input=entry.get("price_per_1m_input", 0.0),
            price_per_1m_output=entry.get("price_per_1m_output", 0.0),
            max_retries=entry.get("max_retries", 3),
            timeout=entry.get("timeout", 30.0),
            max_concurrency=entry.get("max_concurrency", 4),
        )
        backends[config.backend_id] = config
    return ServiceConfig(
        corpus_path=payload["corpus_path"],
        index_path=payload["index_path"],
        listen_host=payload.get("listen_host", "127.0.0.1"),
        listen_port=payload.get("listen_port", 8000),
        default_backend=payload.get("default_backend", "extractor"),
        default_k=payload.get("default_k", 3),
        template_path=payload.get("template_path"),
        budget=payload.get("budget"),
        reports_dir=payload.get("reports_dir", "reports"),
        cors_origins=payload.get("cors_origins", ["*"]),
        backends=backends,
    )


def build_engine(config: ServiceConfig) -> QueryEngine:
    config.validate_paths()
    template = load_template(config.template_path) if config.template_path else DEFAULT_TEMPLATE
    return QueryEngine(
        corpus=read_corpus_file(config.corpus_path),
        index=load_index(config.index_path),
        backends=config.backends,
        default_backend=config.default_backend,
        default_k=config.default_k,
        template=template,
        budget=config.budget,
    )


class QueryRequest(BaseModel):
    question: str
    backend: str | None = None
    k: int | None = None


class EvalRunRequest(BaseModel):
    backend: str
    seed: int
    n_batches: int = 5
    cves_per_batch: int = 5


def _error(status: int, error: str, detail: str = "", **extra) -> JSONResponse:
    body = {"error": error}
    if detail:
        body["detail"] = detail
    body.update(extra)
    return JSONResponse(status_code=status, content=body)


def create_app(
    config: ServiceConfig,
    engine: QueryEngine | None = None,
    load: bool = True,
) -> FastAPI:
    """Build the API; pass an engine to skip path loading, or load=False to
    start without one (endpoints then answer 503 until an engine exists)."""
    app = FastAPI(title="vulnqa", version=__version__)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=config.cors_origins,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    if engine is None and load:
        engine = build_engine(config)
    app.state.engine = engine

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request, exc):
        # Every error body carries a machine-readable kind, including
        # request-shape problems.
        return _error(400, "invalid_request", str(exc))
    app.state.reports_dir = Path(config.reports_dir)
    app.state.active_runs: set[str] = set()
    app.state.failed_runs: dict[str, str] = {}
    app.state.runs_lock = threading.Lock()

    def report_path(report_id: str) -> Path:
        return app.state.reports_dir / f"{report_id}.json"

    @app.get("/health")
    def health():
        eng = app.state.engine
        if eng is None:
            return _error(503, "index_not_loaded")
        return {
            "status": "ok",
            "corpus_records": len(eng.corpus),
            "index_rows": eng.index.n_rows,
            "version": __version__,
        }

    @app.post("/api/query")
    def query(request: QueryRequest):
        eng = app.state.engine
        if eng is None:
            return _error(503, "index_not_loaded")
        if not request.question.strip():
            return _error(400, "empty_question")
        try:
            result = eng.ask(request.question, backend_id=request.backend, k=request.k)
        except UnknownBackend as exc:
            return _error(400, "unknown_backend", str(exc), known_backends=exc.known)
        if result.failure is not None:
            return _error(502, "backend_failure", kind=result.failure)
        return result.as_dict()

    @app.post("/api/eval/run")
    def eval_run(request: EvalRunRequest):
        eng = app.state.engine
        if eng is None:
            return _error(503, "index_not_loaded")
        try:
            eng.backend_config(request.backend)
        except UnknownBackend as exc:
            return _error(400, "unknown_backend", str(exc), known_backends=exc.known)

        report_id = f"{request.backend}_seed{request.seed}"
        with app.state.runs_lock:
            if report_id in app.state.active_runs:
                return _error(409, "run_in_progress", report_id=report_id)
            app.state.active_runs.add(report_id)
            app.state.failed_runs.pop(report_id, None)

        def worker():
            try:
                report = run_evaluation(
                    eng,
                    backend_id=request.backend,
                    seed=request.seed,
                    n_batches=request.n_batches,
                    cves_per_batch=request.cves_per_batch,
                )
                app.state.reports_dir.mkdir(parents=True, exist_ok=True)
                write_report(report, report_path(report_id))
            except Exception as exc:  # surfaced via GET, never lost
                with app.state.runs_lock:
                    app.state.failed_runs[report_id] = str(exc)
            finally:
                with app.state.runs_lock:
                    app.state.active_runs.discard(report_id)

        threading.Thread(target=worker, daemon=True).start()
        return {"report_id": report_id}

    @app.get("/api/eval/reports/{report_id}")
    def eval_report(report_id: str):
        path = report_path(report_id)
        if path.is_file():
            return json.loads(path.read_text(encoding="utf-8"))
        with app.state.runs_lock:
            running = report_id in app.state.active_runs
            failed = app.state.failed_runs.get(report_id)
        if failed is not None:
            return _error(500, "eval_failed", failed)
        return _error(404, "report_not_found", running=running)

    return app


def run_server(config: ServiceConfig) -> None:
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.listen_host, port=config.listen_port)
