# main.py

import logging

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from config import configure_logging
from exceptions import SamatError
from routers import experiment_router, precoder_router

configure_logging()
logger = logging.getLogger(__name__)

app = FastAPI(title="SAMAT MISO Broadcast Rate Toolkit")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(SamatError)
async def samat_error_handler(request: Request, exc: SamatError):
    logger.warning("%s %s: %s: %s", request.method, request.url.path, type(exc).__name__, exc)
    return JSONResponse(status_code=422, content={"detail": str(exc), "error": type(exc).__name__})


app.include_router(experiment_router.router)
app.include_router(precoder_router.router)


@app.get("/")
def read_root():
    return {"message": "Welcome to the SAMAT MISO broadcast rate toolkit"}
