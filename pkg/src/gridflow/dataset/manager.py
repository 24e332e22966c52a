"""Runs the dataset pipeline for one configured dataset and keeps its state.

State lives in ``<workdir>/datasets/<name>/``: a generation-numbered
partition file and block listing, committed by atomically replacing
``state.json``.  A crash before the commit leaves the previous generation
in force.
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path

from .. import plugins
from ..config import ConfigView, canonical_name
from ..errors import ConfigError, CorruptPartitionFile
from ..fsutil import atomic_writer, atomic_write_text, crashpoint
from ..paramspace import DataSource
from .model import DatasetBlock, FileEntry
from .partitioners import partition_blocks
from .points import partition_to_point
from .processors import ConsistencyCheck, run_dataset_processors
from .providers import provide_blocks
from .resync import compute_delta, resync_partitions
from .store import PartitionStore, load_all, store_partitions

log = logging.getLogger(__name__)


def _blocks_to_json(blocks) -> list:
    return [
        [b.dataset, b.block_id, b.locations, b.nickname,
         [[f.url, f.work_units, f.metadata] for f in b.files]]
        for b in blocks
    ]


def _blocks_from_json(data) -> list[DatasetBlock]:
    return [
        DatasetBlock(ds, bid, [FileEntry(u, n, m) for u, n, m in files], locs, nick)
        for ds, bid, locs, nick, files in data
    ]


class DatasetManager:
    def __init__(self, view: ConfigView, name: str, workdir, base_dir):
        self.view = view
        self.name = canonical_name(name)
        self.scope = [self.name, "dataset"]
        self.base_dir = Path(base_dir)
        safe = re.sub(r"[^A-Za-z0-9_.-]+", "_", self.name)
        self.dir = Path(workdir) / "datasets" / safe
        if not any(view.has(section, "source") for section in self.scope):
            raise ConfigError(f"dataset [{self.name}] has no 'source' option")
        self.providers = self._providers()
        part_name = view.get(self.scope, "partitioner", "file-count")
        self.partitioner = plugins.create("partitioner", part_name, view, self.name, "partitioner")
        self.processors = []
        for proc in view.get_list(self.scope, "processors"):
            kwargs = {"require_units": self.partitioner.requires_units}
            self.processors.append(plugins.create("processor", proc, view, self.name, "processors", **kwargs))
        if self.partitioner.requires_units and not any(isinstance(p, ConsistencyCheck) for p in self.processors):
            self.processors.append(ConsistencyCheck(require_units=True))
        self.partition_chain = [
            plugins.create("partition_processor", proc, view, self.name, "partition processors")
            for proc in view.get_list(self.scope, "partition processors")
        ]
        self._store: PartitionStore | None = None
        self.last_delta = None

    def _providers(self):
        nickname = self.view.get(self.scope, "nickname", None)
        out = []
        for line in filter(None, (s.strip() for s in self.view.get(self.scope, "source").split("\n"))):
            kind, sep, arg = line.partition(":")
            if not sep:
                kind, arg = "manifest", line
            cls = plugins.resolve(plugins.PluginSpec("provider", kind.strip(), self.name), self.view, "source")
            out.append(cls.from_spec(arg.strip(), self.base_dir, nickname))
        return out

    # -- persisted state ---------------------------------------------------

    def _state(self):
        path = self.dir / "state.json"
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text())
        except ValueError:
            raise CorruptPartitionFile(f"{path}: unreadable dataset state") from None

    def _commit(self, generation: int, parts, blocks) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        part_file = f"partitions.{generation}.bin"
        block_file = f"blocks.{generation}.json"
        store_partitions(parts, self.dir / part_file)
        crashpoint("dataset:partitions-written")
        with atomic_writer(self.dir / block_file) as fh:
            json.dump(_blocks_to_json(blocks), fh, separators=(",", ":"))
        crashpoint("dataset:blocks-written")
        state = {"generation": generation, "partitions": part_file, "blocks": block_file}
        atomic_write_text(self.dir / "state.json", json.dumps(state))
        for stale in self.dir.glob("*.*"):
            if stale.name not in (part_file, block_file, "state.json") and not stale.name.startswith("."):
                stale.unlink()

    # -- pipeline ----------------------------------------------------------

    def scan(self) -> list[DatasetBlock]:
        return run_dataset_processors(provide_blocks(self.providers), self.processors)

    def refresh(self) -> DataSource:
        """Rescan the source, resync partitions and return the point source."""
        self.close()
        new_blocks = self.scan()
        state = self._state()
        if state is None:
            parts = partition_blocks(new_blocks, self.partitioner)
            self._commit(0, parts, new_blocks)
            log.info("dataset %s: %d blocks -> %d partitions", self.name, len(new_blocks), len(parts))
            valid = [p.partition_id for p in parts if p.valid]
        else:
            old_blocks = _blocks_from_json(json.loads((self.dir / state["blocks"]).read_text()))
            delta = compute_delta(old_blocks, new_blocks)
            self.last_delta = delta
            if delta.empty:
                with PartitionStore(self.dir / state["partitions"]) as store:
                    valid = [p.partition_id for p in store if p.valid]
            else:
                parts = load_all(self.dir / state["partitions"])
                result = resync_partitions(parts, delta, self.partitioner, new_blocks)
                self._commit(state["generation"] + 1, result.partitions, new_blocks)
                log.info(
                    "dataset %s changed: %d kept, %d invalidated, %d new partitions",
                    self.name, len(result.kept), len(result.invalidated), len(result.appended),
                )
                valid = [p.partition_id for p in result.partitions if p.valid]
        return DataSource(self.name, tuple(valid))

    def store(self) -> PartitionStore:
        if self._store is None:
            state = self._state()
            if state is None:
                raise CorruptPartitionFile(f"dataset {self.name} has not been processed yet")
            self._store = PartitionStore(self.dir / state["partitions"])
        return self._store

    def fragment(self, partition_id: int) -> tuple[dict, dict]:
        """Load one partition on demand and map it to point variables."""
        return partition_to_point(self.store().load(partition_id), self.partition_chain)

    def close(self) -> None:
        if self._store is not None:
            self._store.close()
            self._store = None
