"""Exception hierarchy. Everything raised on purpose derives from LabelforgeError,
which the CLI maps to exit code 1."""


class LabelforgeError(Exception):
    pass


# report parsing
class MalformedJson(LabelforgeError):
    pass


class MissingRequiredField(LabelforgeError):
    def __init__(self, field: str):
        super().__init__(f"missing required field: {field}")
        self.field = field


class InvalidTimestamp(LabelforgeError):
    pass


# store / manifests
class UnknownApp(LabelforgeError, KeyError):
    def __str__(self):
        return f"unknown app: {self.args[0]}"


class NoSnapshotBefore(LabelforgeError):
    pass


class UnknownLabelString(LabelforgeError):
    pass


class DuplicateAppId(LabelforgeError):
    pass


class EmptyDataset(LabelforgeError):
    pass


class MissingSnapshot(LabelforgeError, KeyError):
    def __str__(self):
        return f"no snapshot for app: {self.args[0]}"


# metrics
class MissingPrediction(LabelforgeError, KeyError):
    def __str__(self):
        return f"no prediction for app: {self.args[0]}"


class EmptyDatasetAfterFilter(LabelforgeError):
    pass


class NoQualifyingApps(LabelforgeError):
    pass


# strategies / features
class InvalidStrategy(LabelforgeError, ValueError):
    pass


class SchemaKindMismatch(LabelforgeError):
    pass


class EmptySelection(LabelforgeError):
    pass


# forest
class EmptyNode(LabelforgeError, ValueError):
    pass


class EmptyTrainingSet(LabelforgeError, ValueError):
    pass


class SchemaMismatch(LabelforgeError, ValueError):
    pass


class TooFewSamples(LabelforgeError, ValueError):
    pass


class EmptyGrid(LabelforgeError, ValueError):
    pass


# client / service
class ClientError(LabelforgeError):
    pass


class QuotaExhausted(ClientError):
    pass


class Unauthorized(ClientError):
    pass


class NotFound(ClientError):
    pass


class TransportError(ClientError):
    pass


class StaleAfterPolling(ClientError):
    pass


class AllRefreshesFailed(LabelforgeError):
    def __init__(self, msg: str, failures: dict[str, str] | None = None):
        super().__init__(msg)
        self.failures = failures or {}


class InvalidReplayScript(LabelforgeError):
    pass


class NoMoreScriptedScans(LabelforgeError):
    pass


class BindError(LabelforgeError):
    pass
