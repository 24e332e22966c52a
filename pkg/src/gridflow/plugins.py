"""Plugin registry with on-demand loading.

Every plugin is registered by dotted path only; its module is imported the
first time the plugin is requested, so unused plugin code never loads.
"""

from __future__ import annotations

import importlib
from dataclasses import dataclass

from .config import ConfigView, canonical_name
from .errors import PluginNotFound

CATEGORIES = ("task", "backend", "provider", "processor", "partitioner", "partition_processor")

_REGISTRY: dict[str, dict[str, str]] = {
    "task": {
        "usertask": "gridflow.task:UserTask",
    },
    "backend": {
        "local": "gridflow.backend.local:LocalBackend",
        "mock": "gridflow.backend.mock:MockBackend",
    },
    "provider": {
        "manifest": "gridflow.dataset.providers:ManifestProvider",
        "scan": "gridflow.dataset.providers:DirectoryScanProvider",
        "synthetic": "gridflow.dataset.providers:SyntheticProvider",
    },
    "processor": {
        "url-filter": "gridflow.dataset.processors:UrlFilter",
        "metadata-filter": "gridflow.dataset.processors:MetadataFilter",
        "location-blacklist": "gridflow.dataset.processors:LocationBlacklist",
        "dedup": "gridflow.dataset.processors:Deduplicate",
        "consistency": "gridflow.dataset.processors:ConsistencyCheck",
    },
    "partitioner": {
        "block": "gridflow.dataset.partitioners:BlockBoundaryPartitioner",
        "file-count": "gridflow.dataset.partitioners:FileCountPartitioner",
        "work-unit": "gridflow.dataset.partitioners:WorkUnitPartitioner",
        "metadata-group": "gridflow.dataset.partitioners:MetadataGroupPartitioner",
        "hybrid": "gridflow.dataset.partitioners:HybridPartitioner",
    },
    "partition_processor": {
        "lfn-to-pfn": "gridflow.dataset.points:LfnToPfn",
        "location-blacklist": "gridflow.dataset.points:PartitionLocationBlacklist",
    },
}

_loaded: dict[str, object] = {}


@dataclass(frozen=True)
class PluginSpec:
    category: str
    name: str
    options_section: str


def register(category: str, name: str, target: str) -> None:
    """Register ``target`` (``module:attribute``) under ``category``/``name``."""
    if category not in _REGISTRY:
        raise ValueError(f"unknown plugin category {category!r}")
    _REGISTRY[category][canonical_name(name)] = target


def available(category: str) -> list[str]:
    return sorted(_REGISTRY[category])


def loaded_modules() -> list[str]:
    return sorted(_loaded)


def resolve(spec: PluginSpec, view: ConfigView | None = None, key: str | None = None, key_scope=None):
    """Import and return the class behind ``spec``.

    Unknown names raise PluginNotFound pointing at the file:line that named
    the plugin when ``view`` and ``key`` are given.  ``key_scope`` is the
    scope chain holding ``key`` (default: the plugin's options section).
    """
    table = _REGISTRY.get(spec.category)
    if table is None:
        raise ValueError(f"unknown plugin category {spec.category!r}")
    target = table.get(canonical_name(spec.name))
    if target is None:
        where = view.where(key_scope or [spec.options_section], key) + ": " if view is not None and key else ""
        raise PluginNotFound(
            f"{where}unknown {spec.category} plugin {spec.name!r} "
            f"(available: {', '.join(sorted(table))})"
        )
    if target not in _loaded:
        module_name, _, attr = target.partition(":")
        module = importlib.import_module(module_name)
        _loaded[target] = getattr(module, attr)
    return _loaded[target]


def create(category: str, name: str, view: ConfigView, section: str, key: str | None = None,
           key_scope=None, /, **kwargs):
    """Resolve and instantiate a plugin configured from ``section``."""
    cls = resolve(PluginSpec(category, name, section), view, key, key_scope)
    return cls.from_config(view, section, **kwargs)
