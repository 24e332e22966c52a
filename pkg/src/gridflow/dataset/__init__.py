"""Dataset pipeline: providers, processors, partitioners, storage, resync."""

from .model import INVALID, VALID, DatasetBlock, DatasetDelta, FileEntry, Partition, Segment
from .partitioners import (
    BlockBoundaryPartitioner,
    FileCountPartitioner,
    HybridPartitioner,
    MetadataGroupPartitioner,
    WorkUnitPartitioner,
    block_segments,
    partition_blocks,
)
from .points import LfnToPfn, PartitionLocationBlacklist, partition_to_point
from .processors import (
    ConsistencyCheck,
    Deduplicate,
    LocationBlacklist,
    MetadataFilter,
    UrlFilter,
    run_dataset_processors,
)
from .providers import (
    DirectoryScanProvider,
    ManifestProvider,
    SyntheticProvider,
    parse_manifest,
    provide_blocks,
    write_manifest,
)
from .resync import ResyncResult, compute_delta, resync_partitions
from .store import PartitionStore, load_all, load_partition, store_partitions

__all__ = [
    "INVALID",
    "VALID",
    "BlockBoundaryPartitioner",
    "ConsistencyCheck",
    "DatasetBlock",
    "DatasetDelta",
    "Deduplicate",
    "DirectoryScanProvider",
    "FileCountPartitioner",
    "FileEntry",
    "HybridPartitioner",
    "LfnToPfn",
    "LocationBlacklist",
    "ManifestProvider",
    "MetadataFilter",
    "MetadataGroupPartitioner",
    "Partition",
    "PartitionLocationBlacklist",
    "PartitionStore",
    "ResyncResult",
    "Segment",
    "SyntheticProvider",
    "UrlFilter",
    "WorkUnitPartitioner",
    "block_segments",
    "compute_delta",
    "load_all",
    "load_partition",
    "parse_manifest",
    "partition_blocks",
    "partition_to_point",
    "provide_blocks",
    "resync_partitions",
    "run_dataset_processors",
    "store_partitions",
    "write_manifest",
]
