"""FastAPI application wrapping the solver package."""

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import PolyakFMError, SpecValidationError
from . import handlers, schemas

# path -> (handler, request model); the CLI's in-process client uses the
# same table, so both transports stay in lockstep.
ROUTES = {
    "/problems/generate": (handlers.handle_generate, schemas.GenerateRequest),
    "/solve": (handlers.handle_solve, schemas.SolveRequest),
    "/bounds": (handlers.handle_bounds, schemas.BoundsRequest),
    "/coverage/exact": (handlers.handle_coverage_exact, schemas.CoverageExactRequest),
    "/coverage/mc": (handlers.handle_coverage_mc, schemas.CoverageMcRequest),
    "/coverage/quantile": (handlers.handle_quantile, schemas.QuantileRequest),
    "/audit": (handlers.handle_audit, schemas.AuditRequest),
    "/simulate/hitting-time": (handlers.handle_hitting_time, schemas.HittingTimeRequest),
    "/experiments": (handlers.handle_experiment, schemas.ExperimentRequest),
}


def create_app():
    app = FastAPI(
        title="polyakfm",
        version=__version__,
        description=(
            "Stochastic convex feasibility service: minibatch Polyak-step solves, "
            "coverage certification, iteration-bound calculators, problem "
            "generation, audits, and seed-replicated experiments."
        ),
    )

    @app.exception_handler(SpecValidationError)
    async def _spec_error(request, exc):
        return JSONResponse(
            status_code=422,
            content={"error": "SpecValidationError", "errors": exc.errors},
        )

    @app.exception_handler(PolyakFMError)
    async def _domain_error(request, exc):
        return JSONResponse(
            status_code=400,
            content={"error": type(exc).__name__, "message": str(exc)},
        )

    @app.exception_handler(ValueError)
    async def _value_error(request, exc):
        return JSONResponse(
            status_code=400,
            content={"error": "ValueError", "message": str(exc)},
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return handlers.handle_health()

    def _register(path, handler, request_model):
        @app.post(path, name=handler.__name__)
        def endpoint(payload: request_model):  # type: ignore[valid-type]
            return handler(payload)

    for path, (handler, request_model) in ROUTES.items():
        _register(path, handler, request_model)
    return app


app = create_app()
