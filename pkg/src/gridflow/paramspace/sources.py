"""Parameter sources and their enumeration into parameter points."""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field

from ..errors import ConfigError, LookupWithoutKey, MalformedLookupRule, MalformedTuple

log = logging.getLogger(__name__)

#: point variables that are lifted into job requirements instead of values
REQUIREMENT_VARS = ("WALLTIME", "MEMORY", "CPUS")
REQUIREMENT_KEYS = ("WALLTIME", "MEMORY", "CPUS", "LOCATION")


@dataclass(slots=True)
class ParameterPoint:
    """One resolved variable assignment; maps 1:1 to a job.

    ``partition`` identifies the dataset partition backing the point (for
    example ``"data:17"``); its file variables are resolved on demand.
    """

    values: dict
    requirements: dict = field(default_factory=dict)
    partition: str | None = None
    active: bool = True
    _hash: str | None = field(default=None, repr=False, compare=False)

    @property
    def hash(self) -> str:
        if self._hash is None:
            self._hash = point_hash(self.values, self.partition)
        return self._hash

    def get(self, var: str) -> str:
        return self.values.get(var, "")


def point_hash(values: dict, partition: str | None = None) -> str:
    """Digest of the non-empty (var, value) pairs plus partition identity.

    Empty values are skipped so that a missing variable and an empty one
    hash alike.
    """
    digest = hashlib.blake2b(digest_size=12)
    for var in sorted(values):
        value = values[var]
        if value != "":
            digest.update(f"{var}\0{value}\0".encode("utf-8"))
    if partition is not None:
        digest.update(b"\1" + partition.encode("utf-8"))
    return digest.hexdigest()


@dataclass(frozen=True)
class ValueList:
    var: str
    values: tuple


@dataclass(frozen=True)
class TupleList:
    vars: tuple
    tuples: tuple

    def __post_init__(self):
        for tup in self.tuples:
            if len(tup) != len(self.vars):
                raise MalformedTuple(
                    f"tuple {tup!r} has {len(tup)} values, expected {len(self.vars)} for {self.vars!r}"
                )


@dataclass(frozen=True)
class Lookup:
    var: str
    key_var: str
    default_values: tuple
    rules: tuple = ()  # ordered (match, values) pairs

    def values_for(self, key_value: str) -> tuple:
        for match, values in self.rules:
            if match == key_value:
                return values or ("",)
        return self.default_values or ("",)


@dataclass(frozen=True)
class Cross:
    factors: tuple


@dataclass(frozen=True)
class Chain:
    terms: tuple


@dataclass(frozen=True)
class DataSource:
    """Points backed by the valid partitions of one dataset.

    ``fragments`` optionally maps partition id to eagerly known
    ``(values, requirements)``; otherwise points carry only the partition
    identity and the engine fills file variables at submission time.
    """

    name: str
    partition_ids: tuple
    fragments: dict | None = field(default=None, compare=False)


def variables(source) -> list[str]:
    """Variables defined by ``source``, in first-appearance order."""
    if isinstance(source, ValueList):
        return [source.var]
    if isinstance(source, TupleList):
        return list(source.vars)
    if isinstance(source, Lookup):
        return [source.var]
    if isinstance(source, (Cross, Chain)):
        parts = source.factors if isinstance(source, Cross) else source.terms
        seen: dict = {}
        for part in parts:
            seen.update(dict.fromkeys(variables(part)))
        return list(seen)
    if isinstance(source, DataSource):
        if source.fragments:
            first = next(iter(source.fragments.values()))
            return list(first[0])
        return []
    raise TypeError(f"not a parameter source: {source!r}")


# -- option value parsing --------------------------------------------------

_TUPLE = re.compile(r"\(([^()]*)\)")


def is_tuple_key(key: str) -> bool:
    key = key.strip()
    return key.startswith("(") and key.endswith(")")


def tuple_key_vars(key: str) -> tuple:
    inner = key.strip()[1:-1]
    names = tuple(name.strip() for name in inner.split(","))
    if not all(names):
        raise MalformedTuple(f"malformed tuple key {key!r}")
    return names


def parse_values(raw: str, key: str | None = None):
    """Interpret the option text of one variable.

    * ``(a, b) (c, d)`` under a tuple key ``(X, Y)`` gives a TupleList
    * a first line followed by ``match => values`` lines gives a Lookup
      (``var``/``key_var`` are left empty for the caller to fill)
    * anything else is a whitespace separated ValueList
    """
    lines = [line.strip() for line in raw.split("\n")]
    if key is not None and is_tuple_key(key):
        names = tuple_key_vars(key)
        text = " ".join(lines)
        if _TUPLE.sub("", text).strip():
            raise MalformedTuple(f"values of {key!r} must be parenthesized tuples: {raw!r}")
        tuples = tuple(
            tuple(item.strip() for item in match.split(",")) for match in _TUPLE.findall(text)
        )
        return TupleList(names, tuples)
    var = key.strip() if key else ""
    rule_lines = [line for line in lines[1:] if line]
    if rule_lines and any("=>" in line for line in rule_lines):
        rules = []
        for line in rule_lines:
            match, sep, values = line.partition("=>")
            if not sep or not match.strip():
                raise MalformedLookupRule(f"lookup rule {line!r} is not of the form 'match => values'")
            rules.append((match.strip(), tuple(values.split())))
        return Lookup(var, "", tuple(lines[0].split()), tuple(rules))
    return ValueList(var, tuple(" ".join(lines).split()))


# -- enumeration -----------------------------------------------------------

# partial points are (values, requirements, partition) triples


def _merge(a, b):
    values = {**a[0], **b[0]}
    reqs = {**a[1], **b[1]} if b[1] else a[1]
    if a[2] is None:
        part = b[2]
    elif b[2] is None:
        part = a[2]
    else:
        part = f"{a[2]}|{b[2]}"
    return values, reqs, part


_EMPTY_REQS: dict = {}


def _arrange(factors: tuple) -> list:
    """Order cross factors so every Lookup follows the factor defining its key."""
    plain = list(factors)
    order: list = []
    pending = []
    defined: set = set()
    for factor in plain:
        if isinstance(factor, Lookup) and factor.key_var not in defined:
            pending.append(factor)
            continue
        order.append(factor)
        defined.update(variables(factor))
        progressed = True
        while progressed:
            progressed = False
            for lookup in list(pending):
                if lookup.key_var in defined:
                    order.append(lookup)
                    defined.add(lookup.var)
                    pending.remove(lookup)
                    progressed = True
    if pending:
        raise LookupWithoutKey(
            f"lookup {pending[0].var}[{pending[0].key_var}] has no sibling defining {pending[0].key_var}"
        )
    return order


def _enum(source) -> list:
    if isinstance(source, ValueList):
        return [({source.var: v}, _EMPTY_REQS, None) for v in source.values]
    if isinstance(source, TupleList):
        return [(dict(zip(source.vars, tup)), _EMPTY_REQS, None) for tup in source.tuples]
    if isinstance(source, Lookup):
        raise LookupWithoutKey(f"lookup {source.var}[{source.key_var}] used outside a cross product")
    if isinstance(source, DataSource):
        frags = source.fragments
        out = []
        for pid in source.partition_ids:
            ident = f"{source.name}:{pid}"
            if frags is not None and pid in frags:
                values, reqs = frags[pid]
                out.append((dict(values), dict(reqs), ident))
            else:
                out.append(({}, _EMPTY_REQS, ident))
        return out
    if isinstance(source, Chain):
        out = []
        for term in source.terms:
            out.extend(_enum(term))
        return out
    if isinstance(source, Cross):
        partials = [({}, _EMPTY_REQS, None)]
        for factor in _arrange(source.factors):
            if isinstance(factor, Lookup):
                partials = [
                    _merge(p, ({factor.var: v}, _EMPTY_REQS, None))
                    for p in partials
                    for v in factor.values_for(p[0].get(factor.key_var, ""))
                ]
            else:
                sub = _enum(factor)
                partials = [_merge(p, s) for p in partials for s in sub]
        return partials
    raise TypeError(f"not a parameter source: {source!r}")


def parse_duration(text: str) -> int:
    """``h[:mm[:ss]]`` to seconds (a bare number counts hours)."""
    parts = text.strip().split(":")
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"malformed duration {text!r}") from None
    if len(nums) > 3:
        raise ConfigError(f"malformed duration {text!r}")
    nums += [0] * (3 - len(nums))
    return nums[0] * 3600 + nums[1] * 60 + nums[2]


def _lift_requirements(values: dict, reqs: dict) -> dict:
    lifted = dict(reqs)
    for var in REQUIREMENT_VARS:
        raw = values.pop(var, "")
        if raw == "":
            continue
        if var == "WALLTIME":
            lifted[var] = parse_duration(raw)
        else:
            try:
                lifted[var] = int(raw)
            except ValueError:
                raise ConfigError(f"requirement {var} expects an integer, got {raw!r}") from None
    return lifted


def enumerate_space(source) -> list[ParameterPoint]:
    """Expand ``source`` into its ordered list of points.

    Cross products vary the rightmost factor fastest; chains concatenate
    their terms and give variables missing from a term the empty string.
    """
    names = variables(source)
    points = []
    for values, reqs, part in _enum(source):
        for name in names:
            values.setdefault(name, "")
        if any(var in values for var in REQUIREMENT_VARS):
            reqs = _lift_requirements(values, reqs)
        points.append(ParameterPoint(values, dict(reqs) if reqs else {}, part))
    if not points:
        log.warning("parameter space is empty")
    return points
