"""Exception hierarchy shared by all modules."""


class LayoutError(Exception):
    """Base class for every error raised by this package."""

    code = "layout_error"

    def to_dict(self) -> dict:
        return {"type": self.code, "message": str(self)}


class ConfigurationError(LayoutError):
    code = "configuration_error"


class SamplingError(LayoutError):
    code = "sampling_error"


class SchemaError(LayoutError):
    """Input that does not match a documented file or payload schema."""

    code = "schema_error"


class ValidationError(SchemaError):
    """Backend payload rejected; ``errors`` lists every violated field."""

    code = "validation_error"

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["errors"] = self.errors
        return d


class InferenceError(LayoutError):
    code = "inference_error"

    def __init__(self, message, asset_id=None, retryable=True):
        super().__init__(message)
        self.asset_id = asset_id
        self.retryable = retryable

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(asset_id=self.asset_id, retryable=self.retryable)
        return d


class EvaluationError(LayoutError):
    code = "evaluation_error"


class InfeasibleSceneError(LayoutError):
    code = "infeasible_scene"


class OptimizationError(LayoutError):
    code = "optimization_error"

    def __init__(self, message, group_id=None, diagnostics=None):
        super().__init__(message)
        self.group_id = group_id
        self.diagnostics = diagnostics or []

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(group_id=self.group_id, diagnostics=self.diagnostics)
        return d


class VersionMismatchError(SchemaError):
    code = "version_mismatch"
