from .schemas import (
    BalanceReport,
    DensityEstimate,
    EqualityCaseResult,
    MonotonicityInputs,
    QuadratureSpec,
    ReferenceValues,
    RunConfig,
    SurfaceSpec,
)

__all__ = [
    "QuadratureSpec",
    "SurfaceSpec",
    "ReferenceValues",
    "BalanceReport",
    "MonotonicityInputs",
    "EqualityCaseResult",
    "DensityEstimate",
    "RunConfig",
]
