"""Exception hierarchy shared by all gridflow modules."""

from __future__ import annotations


class GridflowError(Exception):
    """Base class for every error raised by gridflow."""


# -- configuration ---------------------------------------------------------


class ConfigError(GridflowError):
    """Problem with the user configuration (exit code 1)."""


class MissingFile(ConfigError):
    def __init__(self, path):
        super().__init__(f"configuration file not found: {path}")
        self.path = path


class IncludeCycle(ConfigError):
    def __init__(self, chain):
        self.chain = list(chain)
        super().__init__("include cycle: " + " -> ".join(str(p) for p in self.chain))


class ConfigSyntaxError(ConfigError):
    def __init__(self, file, line, text=""):
        self.file = file
        self.line = line
        super().__init__(f"{file}:{line}: cannot parse line {text!r}")


class MissingOption(ConfigError):
    def __init__(self, key, scope_chain):
        self.key = key
        self.scope_chain = list(scope_chain)
        super().__init__(f"option {key!r} not found in sections {self.scope_chain}")


class PluginNotFound(ConfigError):
    pass


# -- parameter space -------------------------------------------------------


class DslError(ConfigError):
    pass


class DslSyntaxError(DslError):
    def __init__(self, expr, position, reason="unexpected input"):
        self.expr = expr
        self.position = position
        super().__init__(f"{reason} at position {position} in {expr!r}")


class UnknownSection(DslError):
    pass


class LookupWithoutKey(DslError):
    pass


class MalformedTuple(DslError):
    pass


class MalformedLookupRule(DslError):
    pass


class CorruptSnapshot(GridflowError):
    def __init__(self, path, line, reason=""):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: corrupt parameter snapshot {reason}".rstrip())


# -- datasets --------------------------------------------------------------


class DatasetError(GridflowError):
    pass


class ProviderUnavailable(DatasetError):
    pass


class ManifestSyntaxError(DatasetError):
    def __init__(self, path, line, text=""):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: malformed manifest line {text!r}")


class ConsistencyError(DatasetError):
    def __init__(self, block, reason):
        self.block = block
        self.reason = reason
        super().__init__(f"block {block}: {reason}")


class MissingWorkUnits(DatasetError):
    pass


class UnknownPartitionId(DatasetError, KeyError):
    pass


class CorruptPartitionFile(DatasetError):
    pass


class InvalidPartition(DatasetError):
    pass


# -- jobs and backends -----------------------------------------------------


class IllegalTransition(GridflowError):
    def __init__(self, job_id, from_state, to_state):
        self.job_id = job_id
        self.from_state = from_state
        self.to_state = to_state
        super().__init__(f"job {job_id}: illegal transition {from_state} -> {to_state}")


class CorruptJobFile(GridflowError):
    def __init__(self, job_id, reason=""):
        self.job_id = job_id
        super().__init__(f"corrupt job database entry for job {job_id} {reason}".rstrip())


class SubmitFailed(GridflowError):
    def __init__(self, reason):
        self.reason = reason
        super().__init__(reason)


class UnknownHandle(GridflowError, KeyError):
    pass


# -- command line ----------------------------------------------------------


class LockHeld(GridflowError):
    def __init__(self, path, pid):
        self.path = path
        self.pid = pid
        super().__init__(f"workdir is locked by process {pid} ({path})")


class SelectorSyntaxError(GridflowError):
    pass
