"""Cyclic arbitrary-scale upscaling engine."""

import json

from ._casr import (
    BackboneFailure,
    CascadeError,
    CasrError,
    FrameError,
    InvalidArgument,
    IoError,
    NumericFailure,
    PlanValidationError,
    aggregate,
    correlation_loss,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
    frechet,
    plan_scales,
    resample,
    segment,
    self_correlation,
    validate_plan,
)
from ._casr import upscale as _upscale


def upscale(image, scale, **kwargs):
    """Run the cascade; returns (output array, drift report dict)."""
    out, report = _upscale(image, scale, **kwargs)
    return out, json.loads(report)


__all__ = [name for name in dir() if not name.startswith("_") and name != "json"]
