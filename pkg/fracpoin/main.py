import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request, status
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from fracpoin import settings
from fracpoin.routers import api, covering

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    logging.basicConfig(level=settings.LOG_LEVEL)
    logger.info("fracpoin API ready (%d quadrature threads, grid depth %d)", settings.THREADS, settings.DEPTH)
    yield


app = FastAPI(title="fracpoin", lifespan=lifespan)
app.include_router(api.router)
app.include_router(covering.router)


@app.exception_handler(RequestValidationError)
async def validation_error(request: Request, exc: RequestValidationError) -> JSONResponse:
    # Out-of-range parameters are a 400 like every other rejected request
    return JSONResponse(
        status_code=status.HTTP_400_BAD_REQUEST,
        content={"detail": jsonable_encoder(exc.errors())},
    )


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}
