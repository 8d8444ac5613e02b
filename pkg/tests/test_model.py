from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from fairassign import jsonio
from fairassign.generators import gen_random
from fairassign.model import (
    CHORES,
    Allocation,
    CardinalInstance,
    InstanceError,
    Lottery,
    OrdinalInstance,
    SubmodularOracle,
    check_submodular,
    ensure_valid,
    exact,
    induced_order,
    items_of,
    mask_of,
    validate,
)

import oracles


def test_induced_order_goods_ties_by_index():
    assert induced_order([5, 5, 1]) == (0, 1, 2)
    assert induced_order([1, 3, 2]) == (1, 2, 0)


def test_induced_order_chores_ascending():
    assert induced_order([2, 1], CHORES) == (1, 0)


def test_validate_flags_zero_disutility_only_when_asked():
    inst = CardinalInstance([[0, 1], [1, 1]], mode=CHORES)
    assert validate(inst).ok and not validate(inst).warnings
    rep = validate(inst, positive_chores=True)
    assert rep.ok
    assert any("positive disutility" in w for w in rep.warnings)


def test_validate_rejects_non_permutation_order():
    rep = validate(OrdinalInstance([(1, 1, 2)], 3))
    assert not rep.ok
    assert "not a permutation" in rep.errors[0]
    with pytest.raises(InstanceError):
        ensure_valid(OrdinalInstance([(1, 1, 2)], 3))


def test_validate_rejects_negative_and_ragged():
    assert not validate(CardinalInstance([[1, -1]])).ok
    assert not validate(CardinalInstance([[1, 2], [1]])).ok


def test_validate_oracle_size_and_singletons():
    inst = CardinalInstance([[1, 1]], rho=SubmodularOracle.cardinality(3))
    assert not validate(inst).ok
    inst = CardinalInstance([[1, 1]], rho=SubmodularOracle.capacities([Fraction(1, 2), 1]))
    assert validate(inst, unit_singletons=True).warnings


def test_exact_reads_floats_through_repr():
    assert exact(0.1) == Fraction(1, 10)
    assert exact("3/7") == Fraction(3, 7)
    with pytest.raises(TypeError):
        exact(True)


def test_mask_roundtrip():
    assert items_of(mask_of([0, 3, 5])) == [0, 3, 5]
    assert mask_of([]) == 0


def test_table_oracle_rejects_non_submodular():
    # rho({0}) + rho({1}) < rho({0,1})
    with pytest.raises(InstanceError):
        SubmodularOracle.table(2, {1: 1, 2: 1, 3: 3})
    with pytest.raises(InstanceError):
        SubmodularOracle.table(2, {1: 1, 2: 1})
    with pytest.raises(InstanceError):
        SubmodularOracle.table(1, {0: 1, 1: 1})


def test_coverage_oracle_is_submodular_and_counts_union():
    rho = SubmodularOracle.coverage([[0, 1], [1, 2], [3]])
    assert rho.value(0b011) == 3
    assert rho.value(0b111) == 4
    assert check_submodular(rho) == []


def test_weighted_coverage():
    rho = SubmodularOracle.coverage([[0], [0, 1]], weights={0: 2, 1: Fraction(1, 2)})
    assert rho.value(0b01) == 2 and rho.value(0b11) == Fraction(5, 2)


def _laminar_rank_lp(m, family, s, S):
    """Rank via a linear program, independent of the recursive evaluator."""
    if not S:
        return 0.0
    A, b = [], []
    for items, cap in family:
        A.append([1.0 if j in items else 0.0 for j in range(m)])
        b.append(float(cap))
    bounds = [(0, float(s[j])) if j in S else (0, 0) for j in range(m)]
    res = linprog(
        [-1.0] * m, A_ub=np.array(A) if A else None, b_ub=np.array(b) if b else None,
        bounds=bounds, method="highs",
    )
    return -res.fun


def test_laminar_matches_lp_rank():
    family = [([0, 1], 1), ([0, 1, 2, 3], 3), ([4, 5], 1)]
    s = [1, 1, 2, 1, 1, 1]
    rho = SubmodularOracle.laminar(6, family, s)
    assert check_submodular(rho) == []
    for S in oracles.subsets(6):
        assert abs(float(rho.value(mask_of(S))) - _laminar_rank_lp(6, family, s, S)) < 1e-9


def test_laminar_rejects_crossing_sets():
    with pytest.raises(InstanceError):
        SubmodularOracle.laminar(3, [([0, 1], 1), ([1, 2], 1)])


def test_allocation_aggregate_and_feasibility():
    x = Allocation(np.array([[Fraction(1, 2), Fraction(1, 2)], [Fraction(1, 2), Fraction(1, 2)]], dtype=object))
    assert list(x.aggregate()) == [1, 1]
    assert x.total() == 2
    assert x.is_feasible(SubmodularOracle.cardinality(2))
    assert not x.is_feasible(SubmodularOracle.capacities([Fraction(1, 2), 1]))


def test_lottery_marginals_and_independence():
    lot = Lottery((((0, 1), Fraction(1, 2)), ((1, 0), Fraction(1, 2))), 2)
    assert lot.total_probability() == 1
    assert lot.marginals().tolist() == [[Fraction(1, 2)] * 2] * 2
    assert lot.is_independent(SubmodularOracle.cardinality(2))
    assert not Lottery((((0, 0), 1),), 2).is_independent(SubmodularOracle.cardinality(2))


# ---------------------------------------------------------------------------
# JSON


@pytest.mark.parametrize("kind", ["cardinality", "capacities", "coverage", "table"])
def test_instance_json_roundtrip(kind):
    inst = gen_random(n=3, m=4, oracle=kind, seed=3)
    text = jsonio.serialize_instance(inst)
    back = jsonio.parse_instance(text)
    assert back.values == inst.values
    assert all(back.rho.value(s) == inst.rho.value(s) for s in range(1 << 4))
    assert jsonio.serialize_instance(back) == text


def test_laminar_json_roundtrip():
    rho = SubmodularOracle.laminar(3, [([0, 1], 1)], [1, 1, 2])
    inst = CardinalInstance([[1, 2, 3]], rho=rho)
    back = jsonio.parse_instance(jsonio.serialize_instance(inst))
    assert [back.rho.value(s) for s in range(8)] == [rho.value(s) for s in range(8)]


def test_instance_json_errors():
    with pytest.raises(InstanceError):
        jsonio.instance_from_dict({"mode": "goods", "agents": 2, "values": [[1, 2]]})
    with pytest.raises(InstanceError):
        jsonio.instance_from_dict({"mode": "bogus", "values": [[1]]})
    with pytest.raises(InstanceError):
        jsonio.instance_from_dict({"mode": "goods", "values": [[True]]})


fractions = st.fractions(min_value=0, max_value=10, max_denominator=50)


@given(st.lists(st.lists(fractions, min_size=3, max_size=3), min_size=1, max_size=4))
def test_numbers_roundtrip_exactly(rows):
    inst = CardinalInstance(rows)
    back = jsonio.parse_instance(jsonio.serialize_instance(inst))
    assert back.values == inst.values


@given(st.lists(st.lists(fractions, min_size=2, max_size=2), min_size=1, max_size=3))
def test_allocation_roundtrip(rows):
    alloc = Allocation(np.array(rows, dtype=object), {"mechanism": "test"})
    back = jsonio.allocation_from_dict(jsonio.loads(jsonio.dumps(jsonio.allocation_to_dict(alloc))))
    assert back.x.tolist() == alloc.x.tolist()
