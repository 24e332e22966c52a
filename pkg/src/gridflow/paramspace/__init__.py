"""Parameter space: expression parsing, enumeration and diffing."""

from .dsl import SpaceBuilder, build_space, parse_dsl
from .snapshot import (
    SnapshotEntry,
    SpaceDiff,
    SpaceSnapshot,
    apply_diff,
    diff_spaces,
    load_snapshot,
    persist_snapshot,
    snapshot_from_points,
)
from .sources import (
    Chain,
    Cross,
    DataSource,
    Lookup,
    ParameterPoint,
    TupleList,
    ValueList,
    enumerate_space,
    parse_duration,
    parse_values,
    point_hash,
    variables,
)

__all__ = [
    "Chain",
    "Cross",
    "DataSource",
    "Lookup",
    "ParameterPoint",
    "SnapshotEntry",
    "SpaceBuilder",
    "SpaceDiff",
    "SpaceSnapshot",
    "TupleList",
    "ValueList",
    "apply_diff",
    "build_space",
    "diff_spaces",
    "enumerate_space",
    "load_snapshot",
    "parse_dsl",
    "parse_duration",
    "parse_values",
    "persist_snapshot",
    "point_hash",
    "snapshot_from_points",
    "variables",
]
