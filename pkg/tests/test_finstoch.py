import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catlm.exceptions import (
    AllZero,
    LengthMismatch,
    NegativeWeight,
    NonStochastic,
    SpaceMismatch,
    UnknownElement,
)
from catlm.finstoch import (
    UNIT,
    FiniteDistribution,
    FiniteKernel,
    JointDistribution,
    SpaceLabel,
    compose,
    copy,
    deterministic,
    diagonal_pair,
    discard,
    identity,
    independent_pair,
    make_distribution,
    marginalize,
    point_mass,
    product_joint,
    push_forward,
    tensor,
    uniform,
)
from catlm.validation import PROB_TOL

from .conftest import distributions, kernels, random_kernel

AB = SpaceLabel.of(["a", "b"])
ABC = SpaceLabel.of(["a", "b", "c"])


def test_make_distribution_examples():
    assert np.allclose(make_distribution(AB, [1, 1]).weights, [0.5, 0.5])
    assert np.allclose(make_distribution(ABC, [2, 0, 2]).weights, [0.5, 0, 0.5])
    w = np.array([1.0, 3.0])
    assert np.allclose(make_distribution(AB, w).weights, w / w.sum())


@pytest.mark.parametrize("raw, exc", [([1, -1], NegativeWeight), ([0, 0], AllZero), ([1, 2, 3], LengthMismatch)])
def test_make_distribution_errors(raw, exc):
    with pytest.raises(exc):
        make_distribution(AB, raw)


def test_distribution_is_immutable():
    p = make_distribution(AB, [1, 3])
    with pytest.raises(ValueError):
        p.weights[0] = 1.0


def test_kernel_rejects_non_stochastic_rows():
    with pytest.raises(NonStochastic):
        FiniteKernel(AB, AB, [[0.5, 0.6], [0.5, 0.5]])


def test_unknown_element():
    with pytest.raises(UnknownElement):
        AB.index("z")


def test_compose_identity_laws(rng):
    k = random_kernel(rng, 3, 4)
    assert k.allclose(compose(identity(k.source), k))
    assert k.allclose(compose(k, identity(k.target)))


def test_compose_matches_matrix_product():
    a = FiniteKernel(AB, AB, [[0.9, 0.1], [0.2, 0.8]])
    b = FiniteKernel(AB, AB, [[0.5, 0.5], [0.3, 0.7]])
    expected = np.array([[0.9 * 0.5 + 0.1 * 0.3, 0.9 * 0.5 + 0.1 * 0.7],
                         [0.2 * 0.5 + 0.8 * 0.3, 0.2 * 0.5 + 0.8 * 0.7]])
    c = compose(a, b)
    assert np.allclose(c.rows, expected, atol=1e-15)
    assert np.max(np.abs(c.rows.sum(axis=1) - 1)) <= 1e-12


def test_compose_space_mismatch(rng):
    with pytest.raises(SpaceMismatch):
        compose(random_kernel(rng, 2, 3), random_kernel(rng, 2, 2))


def test_tensor_examples():
    assert tensor(identity(AB), identity(ABC)).allclose(identity(SpaceLabel.product(AB, ABC)))
    a = np.array([[0.9, 0.1], [0.2, 0.8]])
    b = np.array([[0.5, 0.5], [0.3, 0.7]])
    t = tensor(FiniteKernel(AB, AB, a), FiniteKernel(AB, AB, b))
    for i in range(2):
        for j in range(2):
            for y in range(2):
                for z in range(2):
                    assert t.rows[2 * i + j, 2 * y + z] == pytest.approx(a[i, y] * b[j, z], abs=1e-15)


def test_tensor_with_discard_is_projection(rng):
    k = random_kernel(rng, 2, 3, src=AB)
    t = tensor(k, discard(ABC))
    # (x, w) -> (y, *): the second input is ignored
    for i, (x, w) in enumerate(t.source):
        assert np.allclose(t.rows[i], k.rows[AB.index(x)])
    assert t.target == SpaceLabel.product(k.target, UNIT)


def test_push_forward_examples(rng):
    k = random_kernel(rng, 3, 4, src=ABC)
    assert np.allclose(push_forward(point_mass(ABC, "b"), k).weights, k.rows[1])
    p = make_distribution(ABC, [1, 2, 3])
    assert p.allclose(push_forward(p, identity(ABC)))
    out = push_forward(uniform(AB), FiniteKernel(AB, AB, [[0.9, 0.1], [0.5, 0.5]]))
    assert np.allclose(out.weights, [0.7, 0.3], atol=1e-15)


def test_push_forward_space_mismatch(rng):
    with pytest.raises(SpaceMismatch):
        push_forward(uniform(AB), random_kernel(rng, 3, 2))


def test_diagonal_and_independent_pairs():
    q = make_distribution(AB, [1, 3])
    assert np.allclose(diagonal_pair(point_mass(AB, "a")).weights, [[1, 0], [0, 0]])
    assert np.allclose(diagonal_pair(uniform(AB)).weights, np.diag([0.5, 0.5]))
    assert np.allclose(diagonal_pair(q).weights, np.diag([0.25, 0.75]))
    assert np.allclose(independent_pair(point_mass(AB, "a")).weights, [[1, 0], [0, 0]])
    assert np.allclose(independent_pair(uniform(AB)).weights, 0.25)
    assert np.allclose(independent_pair(q).weights, [[0.0625, 0.1875], [0.1875, 0.5625]])


def test_marginalize_examples():
    p, q = make_distribution(AB, [1, 3]), make_distribution(ABC, [1, 1, 2])
    assert marginalize(product_joint(p, q), "left").allclose(p)
    assert marginalize(product_joint(p, q), "right").allclose(q)
    assert marginalize(diagonal_pair(p), "left").allclose(p)
    assert marginalize(diagonal_pair(p), "right").allclose(p)
    j = JointDistribution(AB, AB, [[0.1, 0.2], [0.3, 0.4]])
    assert np.allclose(marginalize(j, "left").weights, [0.3, 0.7])


def test_copy_counit_laws():
    for space in (AB, ABC):
        ident = identity(space)
        assert compose(copy(space), tensor(ident, discard(space))).rows.shape == ident.rows.shape
        assert np.allclose(compose(copy(space), tensor(ident, discard(space))).rows, ident.rows)
        assert np.allclose(compose(copy(space), tensor(discard(space), ident)).rows, ident.rows)


def test_serialization_round_trip(rng):
    p = make_distribution(ABC, [1, 2, 3])
    data = json.loads(json.dumps(p.to_json()))
    assert set(data) == {"space", "weights"}
    assert FiniteDistribution.from_json(data).allclose(p)
    k = random_kernel(rng, 2, 3, src=SpaceLabel.product(AB, UNIT))
    data = json.loads(json.dumps(k.to_json()))
    assert set(data) == {"source", "target", "rows"}
    back = FiniteKernel.from_json(data)
    assert back.source == k.source and back.allclose(k)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_composition_associative_and_stochastic(data):
    a = data.draw(kernels())
    b = data.draw(kernels(src=a.target))
    c = data.draw(kernels(src=b.target))
    left, right = compose(compose(a, b), c), compose(a, compose(b, c))
    assert np.max(np.abs(left.rows - right.rows)) <= 1e-12
    for k in (left, tensor(a, b)):
        assert np.max(np.abs(k.rows.sum(axis=1) - 1)) <= PROB_TOL


@settings(max_examples=60, deadline=None)
@given(distributions())
def test_discard_is_terminal(p):
    assert np.allclose(push_forward(p, discard(p.space)).weights, [1.0])


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_deterministic_compose_is_function_composition(data):
    n = data.draw(st.integers(1, 5))
    f = data.draw(st.lists(st.integers(0, n - 1), min_size=n, max_size=n))
    g = data.draw(st.lists(st.integers(0, n - 1), min_size=n, max_size=n))
    space = SpaceLabel.range(n)
    kf = deterministic(space, space, lambda x: space.elements[f[space.index(x)]])
    kg = deterministic(space, space, lambda x: space.elements[g[space.index(x)]])
    kgf = deterministic(space, space, lambda x: space.elements[g[f[space.index(x)]]])
    assert compose(kf, kg).allclose(kgf)
    assert compose(kf, kg).is_deterministic()


@settings(max_examples=60, deadline=None)
@given(distributions())
def test_pairs_coincide_iff_point_mass(p):
    same = np.allclose(diagonal_pair(p).weights, independent_pair(p).weights, atol=1e-12)
    assert same == p.is_point_mass()
