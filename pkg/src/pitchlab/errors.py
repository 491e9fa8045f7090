"""Exception hierarchy shared by every pitchlab subsystem."""


class PitchlabError(Exception):
    """Base class for all errors raised by pitchlab."""


class ConfigError(PitchlabError, ValueError):
    """Invalid or unknown configuration key/value."""


class ScenarioError(ConfigError):
    """Unknown or malformed scenario configuration."""


class SimulationFault(PitchlabError, FloatingPointError):
    """A non-finite action or state entered the simulator."""

    def __init__(self, field, value=None):
        self.field = field
        self.value = value
        super().__init__(f"non-finite value in {field}: {value!r}")


class AssetLoadError(PitchlabError, OSError):
    pass


class CalibrationDataError(PitchlabError, ValueError):
    pass


class NetworkConfigError(PitchlabError, ValueError):
    pass


class OptimizerFault(PitchlabError, FloatingPointError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"non-finite gradient for parameter {name!r}")


class LearnerConfigError(PitchlabError, ValueError):
    pass


class LearnerFault(PitchlabError, FloatingPointError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class SnapshotLoadError(PitchlabError, OSError):
    pass


class ReplaySchemaError(PitchlabError, ValueError):
    pass


class ReplayUnderflowError(PitchlabError, RuntimeError):
    pass


class IncompatibleDatasetError(PitchlabError, ValueError):
    pass


class CurriculumError(PitchlabError, RuntimeError):
    pass


class InsufficientDataError(PitchlabError, ValueError):
    pass


class EvaluationConfigError(PitchlabError, ValueError):
    pass
