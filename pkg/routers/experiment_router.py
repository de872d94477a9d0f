# routers/experiment_router.py
import re
from typing import Optional

import pandas as pd
from fastapi import APIRouter, File, HTTPException, UploadFile
from fastapi.responses import StreamingResponse
from starlette.concurrency import run_in_threadpool

from config import get_output_dir, get_workers
from models.scenario import ConvergeRequest, Scenario, ValidateRequest
from services.experiment_service import CSV_COLUMNS, converge_traces, run_scenario, validate_suite
from utils.config_extraction import extract_scenario_from_upload
from utils.excel_utils import create_results_workbook, missing_columns
from utils.export_utils import emit, export_columns
from utils.query_utils import apply_query_filters, table_to_records

router = APIRouter(tags=["experiments"])

_NAME = re.compile(r"^[A-Za-z0-9_\-]+$")


def _result_path(name: str):
    if not _NAME.match(name):
        raise HTTPException(status_code=400, detail=f"Invalid result name: {name}")
    path = get_output_dir() / f"{name}.csv"
    if not path.exists():
        raise HTTPException(status_code=404, detail=f"Result set {name} not found")
    return path


def _load_results(name: str) -> pd.DataFrame:
    table = pd.read_csv(_result_path(name))
    absent = missing_columns(table.columns, CSV_COLUMNS)
    if absent:
        raise HTTPException(status_code=400, detail=f"Result set {name} lacks columns: {absent}")
    return table


@router.post("/scenarios/run")
async def api_run_scenario(scenario: Scenario):
    table = await run_in_threadpool(run_scenario, scenario, get_workers())
    return {"rows": table_to_records(table)}


@router.post("/scenarios/upload")
async def api_upload_scenario(name: str = "scenario", file: UploadFile = File(...)):
    """
    Run an uploaded scenario file and store its CSV under the output directory.

    Args:
        name: Result set name, used as the CSV file stem
        file: Flat key = value scenario file

    Returns:
        Dict with the stored name, row count and failed cells
    """
    if not _NAME.match(name):
        raise HTTPException(status_code=400, detail=f"Invalid result name: {name}")
    scenario = await extract_scenario_from_upload(file)
    table = await run_in_threadpool(run_scenario, scenario, get_workers())
    written = emit(table, "csv", get_output_dir(), name)
    return {
        "name": name,
        "rows": len(table),
        "failed": int((table["status"] != "ok").sum()) if len(table) else 0,
        "files": [path.name for path in written],
    }


@router.post("/scenarios/preview")
async def api_preview_scenario(file: UploadFile = File(...)):
    scenario = await extract_scenario_from_upload(file)
    return scenario.model_dump(mode="json")


@router.get("/results/{name}")
async def api_get_results(
    name: str,
    scheme: Optional[str] = None,
    snr_db_gte: Optional[float] = None,
    snr_db_lte: Optional[float] = None,
    t_mag_A_gte: Optional[float] = None,
    t_mag_A_lte: Optional[float] = None,
):
    table = _load_results(name)
    filters = {
        "scheme": scheme,
        "snr_db_gte": snr_db_gte,
        "snr_db_lte": snr_db_lte,
        "t_mag_A_gte": t_mag_A_gte,
        "t_mag_A_lte": t_mag_A_lte,
    }
    try:
        table = apply_query_filters(table, filters)
    except KeyError as exc:
        raise HTTPException(status_code=400, detail=f"Cannot filter result set {name}: {exc}")
    return {"name": name, "rows": table_to_records(table)}


@router.get("/results/{name}/export")
async def api_export_results(name: str):
    table = _load_results(name)
    excel_stream = create_results_workbook(table, name, export_columns(table))
    return StreamingResponse(
        excel_stream,
        media_type="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
        headers={"Content-Disposition": f"attachment; filename={name}.xlsx"},
    )


@router.post("/validate")
async def api_validate(request: ValidateRequest):
    table = await run_in_threadpool(validate_suite, request.trials, request.seed)
    return {"passed": bool(table["passed"].all()), "checks": table_to_records(table)}


@router.post("/converge")
async def api_converge(request: ConvergeRequest):
    table = await run_in_threadpool(
        converge_traces, request.dims, request.instances, request.eps, request.max_iter, request.seed
    )
    return {"rows": table_to_records(table)}
