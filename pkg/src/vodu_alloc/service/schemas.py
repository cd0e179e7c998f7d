"""Request and response bodies of the experiment service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field


class RunRequest(BaseModel):
    """A config document plus the command-line style overrides."""

    model_config = ConfigDict(extra="forbid")

    config: dict[str, Any] = Field(default_factory=dict, description="parsed config document")
    seeds: Optional[list[int]] = Field(default=None, description="replaces config seeds")
    algos: Optional[list[str]] = Field(default=None, description="replaces config algos")
    out: Optional[str] = Field(default=None, description="replaces config out_dir")
    budget_steps: Optional[int] = Field(default=None, gt=0, description="replaces budget.steps")


class RunRecord(BaseModel):
    model_config = ConfigDict(extra="allow")

    run_id: str
    kind: str
    status: str


class RunResponse(BaseModel):
    out_dir: str
    runs: list[RunRecord]
    failed: int
    result: dict[str, Any] = Field(default_factory=dict)


class ErrorResponse(BaseModel):
    error: str
    detail: str


class Health(BaseModel):
    status: str = "ok"
    version: str
