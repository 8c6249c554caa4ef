import itertools

import numpy as np
import pytest

from sidlab.families import (
    AcceptanceRateError,
    EmptyFamilyError,
    MaskLabelError,
    StateSpaceTooLargeError,
    empirical_label_marginals,
    empirical_size_dist,
    enumerate_family,
    generate_dataset,
    is_valid,
    toy_molecule,
    triangle_free_4,
)
from sidlab.graphs import GraphInstance
from sidlab.rng import RngStream


def brute_force_triangle_free_4():
    """Independent enumerator: all 2^6 edge subsets, direct checks."""
    found = []
    for bits in itertools.product([0, 1], repeat=6):
        g = GraphInstance.from_upper([0] * 4, np.array(bits, dtype=np.int64))
        adj = g.edge_labels != 0
        # connectivity by explicit BFS
        seen = {0}
        frontier = [0]
        while frontier:
            nxt = []
            for i in frontier:
                for j in range(4):
                    if adj[i, j] and j not in seen:
                        seen.add(j)
                        nxt.append(j)
            frontier = nxt
        if len(seen) != 4:
            continue
        triangle = any(
            adj[a, b] and adj[b, c] and adj[a, c]
            for a, b, c in itertools.combinations(range(4), 3)
        )
        if not triangle:
            found.append(g)
    return found


def test_enumeration_matches_brute_force():
    enumerated = {g.key() for g, _ in enumerate_family(triangle_free_4())}
    brute = {g.key() for g in brute_force_triangle_free_4()}
    assert enumerated == brute
    assert len(enumerated) == 19


def test_enumeration_probabilities_sum_to_one():
    probs = [p for _, p in enumerate_family(toy_molecule((1, 2, 3, 4), 3, 3))]
    assert abs(sum(probs) - 1.0) < 1e-12


def test_enumeration_listed_graphs_are_valid():
    fam = triangle_free_4()
    for g, _ in enumerate_family(fam):
        assert is_valid(g, fam)


def test_state_space_cap():
    with pytest.raises(StateSpaceTooLargeError):
        enumerate_family(toy_molecule((1, 2, 3, 4), 3, 8))


def test_degenerate_family_rejected():
    with pytest.raises(ValueError):
        toy_molecule((0, 1), 2, 2)  # valence zero disallowed
    with pytest.raises(EmptyFamilyError):
        enumerate_family(toy_molecule((1, 2), 1, 1))  # lone node cannot meet valence


def test_is_valid_examples():
    fam = toy_molecule((1, 2), 2, 3)
    # path A - B - A with single bonds: sums 1, 2, 1
    path = GraphInstance.from_upper([0, 1, 0], np.array([1, 0, 1]))
    assert is_valid(path, fam)
    # triangle of valence-1 atoms with single bonds: each sum is 2
    tri = GraphInstance.from_upper([0, 0, 0], np.array([1, 1, 1]))
    assert not is_valid(tri, fam)


def test_is_valid_isolated_node_invalid():
    fam = toy_molecule((1,), 1, 2)
    lone = GraphInstance.from_upper([0], np.zeros(0, dtype=np.int64))
    assert not is_valid(lone, fam)


def test_is_valid_rejects_mask_labels():
    fam = triangle_free_4()
    masked = GraphInstance.from_upper([0] * 4, np.array([2, 0, 0, 0, 0, 0]))
    with pytest.raises(MaskLabelError):
        is_valid(masked, fam)


def test_is_valid_permutation_invariant():
    fam = toy_molecule((1, 2, 3, 4), 3, 5)
    rng = RngStream(17)
    dataset = generate_dataset(fam, 20, rng)
    for k, g in enumerate(dataset):
        for _ in range(5):
            perm = rng.child(100 + k).permutation(g.n)
            assert is_valid(g.permuted(perm), fam) == is_valid(g, fam)


def test_generate_dataset_valid_and_deterministic():
    fam = toy_molecule((1, 2, 3, 4), 3, 6)
    a = generate_dataset(fam, 64, RngStream(5))
    b = generate_dataset(fam, 64, RngStream(5))
    assert a == b
    assert all(is_valid(g, fam) for g in a)


def test_generate_dataset_uniform_over_enumerable_family():
    fam = triangle_free_4()
    count = 100_000
    dataset = generate_dataset(fam, count, RngStream(2))
    keys = [g.key() for g, _ in enumerate_family(fam)]
    tally = {k: 0 for k in keys}
    for g in dataset:
        tally[g.key()] += 1
    p = 1.0 / len(keys)
    sigma = (count * p * (1 - p)) ** 0.5
    for k in keys:
        assert abs(tally[k] - count * p) < 3.5 * sigma


def test_generate_dataset_infeasible_family():
    # valences that no n=2 molecule can satisfy: single node type of valence 3
    fam = toy_molecule((3,), 2, 2)
    with pytest.raises(AcceptanceRateError):
        generate_dataset(fam, 1, RngStream(1))


def test_empirical_size_dist():
    fam = toy_molecule((1, 2, 3, 4), 3, 5)
    dataset = generate_dataset(fam, 200, RngStream(3))
    sizes, probs = empirical_size_dist(dataset)
    assert abs(probs.sum() - 1.0) < 1e-12
    assert set(sizes) == {g.n for g in dataset}


def test_empirical_label_marginals():
    fam = toy_molecule((1, 2), 2, 2)
    dataset = [GraphInstance.from_upper([0, 0], np.array([1]))] * 3
    node_m, edge_m = empirical_label_marginals(dataset, fam.schema)
    assert np.allclose(node_m, [1.0, 0.0])
    assert np.allclose(edge_m, [0.0, 1.0, 0.0])
