"""HTTP front end over the experiment harness.

Each POST takes a :class:`RunRequest`, runs the matching harness operation
synchronously and answers with the output directory's manifest.
"""

from __future__ import annotations

from importlib import metadata

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from ..errors import ConfigError, DomainError, ParseError
from ..harness import (
    Manifest,
    config_from_dict,
    eval_sweep,
    run_arch_sweep,
    run_solve,
    run_training,
    tradeoff_report,
)
from .schemas import ErrorResponse, Health, RunRequest, RunResponse

CLIENT_ERRORS = (ConfigError, DomainError, ParseError)


def _config(req: RunRequest):
    return config_from_dict(req.config).with_overrides(
        seeds=req.seeds, algos=req.algos, out_dir=req.out, budget_steps=req.budget_steps
    )


def _response(config, manifest: Manifest, result=None) -> RunResponse:
    return RunResponse(
        out_dir=config.out_dir, runs=manifest.runs, failed=len(manifest.failed), result=result or {}
    )


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def create_app() -> FastAPI:
    app = FastAPI(title="vO-DU allocation lab", version=_version())

    @app.exception_handler(ConfigError)
    @app.exception_handler(DomainError)
    @app.exception_handler(ParseError)
    async def client_error(_request, exc):
        body = ErrorResponse(error=type(exc).__name__, detail=str(exc))
        return JSONResponse(status_code=400, content=body.model_dump())

    @app.get("/health", response_model=Health)
    def health():
        return Health(version=_version())

    @app.post("/train", response_model=RunResponse)
    def train(req: RunRequest):
        config = _config(req)
        return _response(config, run_training(config))

    @app.post("/eval", response_model=RunResponse)
    def evaluate(req: RunRequest):
        config = _config(req)
        path, manifest = eval_sweep(config)
        return _response(config, manifest, {"eval": str(path)})

    @app.post("/solve", response_model=RunResponse)
    def solve(req: RunRequest):
        config = _config(req)
        doc = run_solve(config)
        return _response(config, Manifest(config.out_dir), doc)

    @app.post("/sweep", response_model=RunResponse)
    def sweep(req: RunRequest):
        config = _config(req)
        return _response(config, run_arch_sweep(config))

    @app.post("/report", response_model=RunResponse)
    def report(req: RunRequest):
        config = _config(req)
        out = f"{config.out_dir}/report.csv"
        rows = tradeoff_report([f"{config.out_dir}/eval.csv"], out)
        return _response(config, Manifest(config.out_dir), {"report": out, "rows": len(rows)})

    return app


app = create_app()
