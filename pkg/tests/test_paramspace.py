from __future__ import annotations

import itertools
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridflow.config import parse_config, parse_text
from gridflow.errors import (
    CorruptSnapshot,
    DslSyntaxError,
    LookupWithoutKey,
    MalformedLookupRule,
    MalformedTuple,
    UnknownSection,
)
from gridflow.paramspace import (
    Chain,
    Cross,
    DataSource,
    Lookup,
    ParameterPoint,
    SpaceBuilder,
    SpaceSnapshot,
    TupleList,
    ValueList,
    apply_diff,
    build_space,
    diff_spaces,
    enumerate_space,
    load_snapshot,
    parse_dsl,
    parse_values,
    persist_snapshot,
    point_hash,
    snapshot_from_points,
)

from .conftest import DATA

INITIAL_SWEEP = [("1", "1", "def"), ("2", "1", "x"), ("2", "1", "y"), ("1", "2", "def"), ("1", "0.5", ""), ("2", "0.5", "")]


def _rows(points):
    return [(p.values["MUR"], p.values["MUF"], p.values["VAR"]) for p in points]


def _values_resolver(table):
    def resolve(key):
        return parse_values(table[key], key)
    return resolve


# -- parse_values ----------------------------------------------------------

def test_parse_values_tuple_list():
    src = parse_values("(1, 1) (2, 1) (1, 2)", "(MUR, MUF)")
    assert src == TupleList(("MUR", "MUF"), (("1", "1"), ("2", "1"), ("1", "2")))


def test_parse_values_single_value():
    assert parse_values("0.5", "MUF") == ValueList("MUF", ("0.5",))


def test_parse_values_lookup():
    src = parse_values("def\n2 => x y", "VAR")
    assert isinstance(src, Lookup)
    assert src.default_values == ("def",)
    assert src.rules == (("2", ("x", "y")),)


def test_parse_values_errors():
    with pytest.raises(MalformedTuple):
        parse_values("(1, 1) 3", "(A, B)")
    with pytest.raises(MalformedTuple):
        parse_values("(1, 1, 1)", "(A, B)")
    with pytest.raises(MalformedLookupRule):
        parse_values("def\n2 => x\n => y", "VAR")


# -- parse_dsl -------------------------------------------------------------

def test_example_expression_structure():
    view = parse_config([DATA / "parameters.conf"])
    src = SpaceBuilder(view).build()
    assert isinstance(src, Chain) and len(src.terms) == 2
    first, second = src.terms
    assert isinstance(first, Cross)
    assert isinstance(first.factors[0], TupleList) and first.factors[0].vars == ("MUR", "MUF")
    assert isinstance(first.factors[1], Lookup)
    assert (first.factors[1].var, first.factors[1].key_var) == ("VAR", "MUR")
    assert second == Cross((ValueList("MUR", ("1", "2")), ValueList("MUF", ("0.5",))))


def test_single_name():
    src = parse_dsl("A", None, _values_resolver({"A": "1"}))
    assert enumerate_space(src) == [ParameterPoint({"A": "1"})]


def test_plus_binds_weaker_than_juxtaposition():
    table = {"A": "1 2", "B": "x y z", "C": "p q r s"}
    src = parse_dsl("A B + C", None, _values_resolver(table))
    got = [(p.values["A"], p.values["B"], p.values["C"]) for p in enumerate_space(src)]
    # oracle 1: Chain[Cross[A, B], C]
    expected = [(a, b, "") for a, b in itertools.product("12", "xyz")] + [("", "", c) for c in "pqrs"]
    # oracle 2, the rejected grouping Cross[A, Chain[B, C]], has a different count
    other = len("12") * (len("xyz") + len("pqrs"))
    assert got == expected
    assert len(got) == 2 * 3 + 4 != other


def test_dsl_errors():
    resolver = _values_resolver({"A": "1", "V": "d\n1 => e"})
    with pytest.raises(DslSyntaxError) as err:
        parse_dsl("A +", None, resolver)
    assert err.value.position == 3
    with pytest.raises(DslSyntaxError):
        parse_dsl("   ", None, resolver)
    with pytest.raises(DslSyntaxError):
        parse_dsl("A * A", None, resolver)
    with pytest.raises(LookupWithoutKey):
        parse_dsl("V[A]", None, resolver)


def test_unknown_section():
    view = parse_text("[parameters]\nparameters = A {nowhere}\nA = 1\n")
    with pytest.raises(UnknownSection):
        SpaceBuilder(view).build()


# -- enumeration -----------------------------------------------------------

def test_initial_sweep_golden():
    view = parse_config([DATA / "parameters.conf"])
    points = build_space(view)
    assert _rows(points) == INITIAL_SWEEP
    assert len({p.hash for p in points}) == len(points)


def test_cross_single_point():
    src = Cross((ValueList("A", ("a",)), ValueList("B", ("b",))))
    assert [p.values for p in enumerate_space(src)] == [{"A": "a", "B": "b"}]


def test_cross_rightmost_fastest_against_nested_loops():
    xs, ys = ("0", "1", "2"), ("a", "b", "c", "d")
    src = Cross((ValueList("X", xs), ValueList("Y", ys)))
    expected = []
    for x in xs:
        for y in ys:
            expected.append({"X": x, "Y": y})
    assert [p.values for p in enumerate_space(src)] == expected


def test_lookup_before_its_key_is_reordered():
    src = Cross((Lookup("V", "K", ("d",), (("1", ("one",)),)), ValueList("K", ("1", "2"))))
    assert [p.values for p in enumerate_space(src)] == [{"K": "1", "V": "one"}, {"K": "2", "V": "d"}]


def test_requirement_variables_are_lifted():
    src = Cross((ValueList("A", ("1",)), ValueList("WALLTIME", ("1:30",)), ValueList("MEMORY", ("2000",))))
    (point,) = enumerate_space(src)
    assert point.values == {"A": "1"}
    assert point.requirements == {"WALLTIME": 5400, "MEMORY": 2000}


def test_empty_space_warns(caplog):
    assert enumerate_space(ValueList("A", ())) == []
    assert "empty" in caplog.text


def test_data_source_points_carry_partition_identity():
    src = Cross((DataSource("data", (0, 3)), ValueList("S", ("a", "b"))))
    points = enumerate_space(src)
    assert [(p.partition, p.values["S"]) for p in points] == [
        ("data:0", "a"), ("data:0", "b"), ("data:3", "a"), ("data:3", "b"),
    ]
    assert len({p.hash for p in points}) == 4


def test_jobs_count_without_parameters():
    view = parse_config([DATA / "HelloWorld.conf"])
    points = build_space(view)
    assert len(points) == 2 and all(p.values == {} for p in points)


def test_hash_ignores_order_and_requirements():
    a = ParameterPoint({"A": "1", "B": "2"}, {"WALLTIME": 60})
    b = ParameterPoint({"B": "2", "A": "1"}, {"WALLTIME": 7200})
    assert a.hash == b.hash
    assert point_hash({"A": "1"}) != point_hash({"A": "1"}, "data:0")


# -- properties ------------------------------------------------------------

_vals = st.lists(st.text("abc123", min_size=1, max_size=3), min_size=1, max_size=4)


@settings(max_examples=200, deadline=None)
@given(st.lists(_vals, min_size=1, max_size=4))
def test_cross_size_is_product_and_matches_product_oracle(lists):
    factors = tuple(ValueList(f"V{i}", tuple(vals)) for i, vals in enumerate(lists))
    points = enumerate_space(Cross(factors))
    expected = [dict(zip([f.var for f in factors], combo)) for combo in itertools.product(*lists)]
    assert [p.values for p in points] == expected


@settings(max_examples=200, deadline=None)
@given(st.lists(_vals, min_size=1, max_size=4))
def test_chain_size_is_sum_and_order_preserved(lists):
    terms = tuple(ValueList(f"V{i % 2}", tuple(vals)) for i, vals in enumerate(lists))
    points = enumerate_space(Chain(terms))
    assert len(points) == sum(len(v) for v in lists)
    pos = 0
    for term in terms:
        assert [p.values[term.var] for p in points[pos:pos + len(term.values)]] == list(term.values)
        pos += len(term.values)


@settings(max_examples=200, deadline=None)
@given(_vals, st.dictionaries(st.text("abc123", min_size=1, max_size=3), _vals, max_size=3), _vals)
def test_lookup_count_matches_nested_loop_oracle(keys, rules, defaults):
    src = Cross((ValueList("K", tuple(keys)), Lookup("V", "K", tuple(defaults), tuple((k, tuple(v)) for k, v in rules.items()))))
    expected = [(k, v) for k in keys for v in rules.get(k, defaults)]
    assert [(p.values["K"], p.values["V"]) for p in enumerate_space(src)] == expected


# -- snapshot and diff -----------------------------------------------------

def _example_points(mur="1 2"):
    return build_space(parse_config([DATA / "parameters.conf"], [f"pspace1.mur={mur}"]))


def test_edited_sweep_diff():
    old = snapshot_from_points(_example_points())
    diff = diff_spaces(old, _example_points("0.5 1"))
    assert sorted(diff.assignments) == [0, 1, 2, 3, 4]
    assert diff.disabled == [5]
    assert [(j, p.values["MUR"], p.values["MUF"]) for j, p in diff.appended] == [(6, "0.5", "0.5")]
    new = apply_diff(old, diff)
    assert [(e.job_id, e.active) for e in new.entries][-2:] == [(5, False), (6, True)]


def test_identical_and_empty_diffs():
    points = _example_points()
    snap = snapshot_from_points(points)
    same = diff_spaces(snap, points)
    assert same.unchanged and sorted(same.assignments) == list(range(6))
    fresh = diff_spaces(SpaceSnapshot(), points)
    assert [j for j, _ in fresh.appended] == list(range(6))


def test_diff_round_trip_never_reuses_ids():
    a, b = _example_points(), _example_points("0.5 1")
    s1 = snapshot_from_points(a)
    s2 = apply_diff(s1, diff_spaces(s1, b))
    back = diff_spaces(s2, a)
    assert back.disabled == [6]
    assert [j for j, _ in back.appended] == [7]


def test_duplicate_hashes_bind_earliest():
    p = ParameterPoint({"A": "1"})
    old = snapshot_from_points([p, p, p])
    diff = diff_spaces(old, [p, p])
    assert sorted(diff.assignments) == [0, 1] and diff.disabled == [2]


def test_snapshot_round_trip(tmp_path):
    snap = apply_diff(snapshot_from_points(_example_points()), diff_spaces(snapshot_from_points(_example_points()), _example_points("0.5 1")))
    path = tmp_path / "params.snapshot"
    persist_snapshot(snap, path)
    assert load_snapshot(path) == snap


@pytest.mark.parametrize("mutate", [
    lambda t: t[: len(t) // 2],  # truncated
    lambda t: t.replace("version 1", "version 9"),
    lambda t: t.replace("end 6\n", ""),
    lambda t: t.replace("\n1 ", "\n0 ", 1),  # ids not increasing
])
def test_corrupt_snapshot(tmp_path, mutate):
    path = tmp_path / "params.snapshot"
    persist_snapshot(snapshot_from_points(_example_points()), path)
    path.write_text(mutate(path.read_text()))
    with pytest.raises(CorruptSnapshot):
        load_snapshot(path)


def test_large_snapshot_loads_roughly_linearly(tmp_path):
    def timed(n):
        path = tmp_path / f"s{n}"
        persist_snapshot(snapshot_from_points([ParameterPoint({"I": str(i)}) for i in range(n)]), path)
        start = time.perf_counter()
        assert len(load_snapshot(path).entries) == n
        return time.perf_counter() - start

    small, large = timed(30_000), timed(300_000)
    assert large < 30 * max(small, 1e-3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 5), max_size=12), st.lists(st.integers(0, 5), max_size=12))
def test_diff_properties(old_vals, new_vals):
    old_points = [ParameterPoint({"A": str(v)}) for v in old_vals]
    new_points = [ParameterPoint({"A": str(v)}) for v in new_vals]
    old = snapshot_from_points(old_points)
    diff = diff_spaces(old, new_points)
    # every new point is either bound or appended, exactly once
    assert len(diff.assignments) + len(diff.appended) == len(new_points)
    assert len(diff.assignments) + len(diff.disabled) == len(old_points)
    for job_id, point in diff.assignments.items():
        assert old.entries[job_id].hash == point.hash
    assert [j for j, _ in diff.appended] == list(range(len(old_vals), len(old_vals) + len(diff.appended)))
    new = apply_diff(old, diff)
    assert diff_spaces(new, new_points).unchanged
