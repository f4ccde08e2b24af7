from __future__ import annotations


class PipelineError(RuntimeError):
    code = "pipeline_error"

    def __init__(self, message: str, *, code: str | None = None):
        super().__init__(message)
        if code:
            self.code = code


class ConfigError(PipelineError):
    code = "config_error"


class IngestError(PipelineError):
    """Malformed input file. `location` is a line/column or JSON path."""

    code = "ingest_error"

    def __init__(self, message: str, *, path: str | None = None, location: str | None = None):
        where = ""
        if path:
            where += f" path={path}"
        if location:
            where += f" at={location}"
        super().__init__(f"{message}{where}")
        self.path = path
        self.location = location


class JoinError(PipelineError):
    code = "join_error"


class ReleaseNotFoundError(PipelineError):
    code = "release_not_found"


class FeatureError(PipelineError):
    code = "feature_error"


class ForestError(PipelineError):
    code = "forest_error"


class BorutaError(PipelineError):
    code = "boruta_error"


class GbmError(PipelineError):
    code = "gbm_error"


class PlayerModelError(PipelineError):
    code = "player_model_error"


class SynthError(PipelineError):
    code = "synth_error"


class VerificationError(PipelineError):
    code = "verification_error"


class InputError(PipelineError):
    """Unexpected ValueError/KeyError/OSError from a command, mapped onto the exit-2 contract."""

    code = "input_error"
