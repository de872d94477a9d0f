# routers/precoder_router.py
from fastapi import APIRouter
from starlette.concurrency import run_in_threadpool

from models.precoder import SamatCase
from models.scenario import CorrelationParams, PowerOptimizeRequest, PrecoderRequest, Scheme
from services.correlation_service import exp_correlation
from services.experiment_service import describe_scheme, optimize_power_summary

router = APIRouter(tags=["precoders"])


def _covariances(params: CorrelationParams):
    return (
        exp_correlation(params.t_mag_A, params.phase_A, params.M),
        exp_correlation(params.t_mag_B, params.phase_B, params.M),
    )


@router.post("/precoders/{scheme}")
async def api_precoders(scheme: Scheme, request: PrecoderRequest):
    """
    Precoders, rate coefficients and closed-form rate figures of one scheme
    for exponential-model covariances.
    """
    R_A, R_B = _covariances(request)
    return await run_in_threadpool(describe_scheme, scheme, R_A, R_B, request.snr_db, request.seed)


@router.post("/power/optimize")
async def api_optimize_power(request: PowerOptimizeRequest):
    R_A, R_B = _covariances(request)
    return await run_in_threadpool(
        optimize_power_summary, SamatCase(request.case), R_A, R_B, request.snr_db, request.seed
    )
