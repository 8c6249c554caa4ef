import numpy as np
import pytest

from sidlab.dists import CategoricalDist
from sidlab.families import MaskLabelError, toy_molecule
from sidlab.graphs import GraphInstance
from sidlab.metrics import tv_distance
from sidlab.noising import (
    NoiseSpec,
    betas_from_schedule,
    compose_forward,
    forward_transition_matrix,
    noise_element,
    noise_element_factored,
    noise_element_law,
    noise_graph,
)
from sidlab.rng import RngStream
from sidlab.schedule import Schedule


@pytest.fixture
def mol_spec():
    return NoiseSpec.mask(toy_molecule((1, 2, 3, 4), 3, 5).schema)


def test_noise_element_alpha_one_keeps(mol_spec):
    rng = RngStream(1)
    q0 = mol_spec.node_q0
    assert all(noise_element(2, 1.0, q0, rng) == 2 for _ in range(100))


def test_noise_element_alpha_zero_is_noise():
    q0 = CategoricalDist(np.array([0.2, 0.8]))
    rng = RngStream(2)
    draws = np.array([noise_element(0, 0.0, q0, rng) for _ in range(100_000)])
    hist = np.bincount(draws, minlength=2)
    assert tv_distance(hist, q0.probs) < 0.01


def test_noise_element_mixture_frequency():
    q0 = CategoricalDist(np.array([0.5, 0.5]))
    rng = RngStream(3)
    draws = np.array([noise_element(0, 0.5, q0, rng) for _ in range(100_000)])
    assert abs((draws == 0).mean() - 0.75) < 0.01


def test_factored_endpoints():
    q0 = CategoricalDist(np.array([0.5, 0.5]))
    rng = RngStream(4)
    assert all(noise_element_factored(1, 1.0, q0, rng) == (1, 1) for _ in range(50))
    for _ in range(50):
        _, a = noise_element_factored(1, 0.0, q0, rng)
        assert a == 0


def test_factored_marginal_matches_plain():
    q0 = CategoricalDist(np.array([0.3, 0.2, 0.5]))
    rng = RngStream(5)
    alpha = 0.3
    factored = np.array(
        [noise_element_factored(1, alpha, q0, rng)[0] for _ in range(100_000)]
    )
    law = noise_element_law(1, alpha, q0)
    hist = np.bincount(factored, minlength=3)
    assert tv_distance(hist, law.probs) < 0.01


def test_noise_graph_endpoints(mol_spec):
    sched = Schedule.make("cosine")
    g1 = GraphInstance.from_upper([0, 1, 2], np.array([1, 0, 2]))
    z1, m1 = noise_graph(g1, 1.0, sched, mol_spec, RngStream(6))
    assert z1 == g1
    assert m1.node_flags.all() and m1.upper_flags().all()
    z0, m0 = noise_graph(g1, 0.0, sched, mol_spec, RngStream(7))
    assert not m0.node_flags.any() and not m0.upper_flags().any()
    assert np.all(z0.node_labels == mol_spec.schema.node_mask)


def test_noise_graph_rejects_masked_input(mol_spec):
    sched = Schedule.make("cosine")
    bad = GraphInstance.from_upper([mol_spec.schema.node_mask, 0], np.array([0]))
    with pytest.raises(MaskLabelError):
        noise_graph(bad, 0.5, sched, mol_spec, RngStream(8))


def test_noise_graph_corruption_fraction(mol_spec):
    sched = Schedule.make("cosine")
    g1 = GraphInstance.from_upper([0, 1, 2, 3], np.array([1, 0, 2, 0, 1, 2]))
    t = 0.5
    alpha = sched.alpha(t)
    total, kept = 0, 0
    rng = RngStream(9)
    n_graphs = 10_000
    for i in range(n_graphs):
        _, mask = noise_graph(g1, t, sched, mol_spec, rng.child(i))
        kept += mask.node_flags.sum() + mask.upper_flags().sum()
        total += 10
    frac = kept / total
    sigma = (alpha * (1 - alpha) / total) ** 0.5
    assert abs(frac - alpha) < 3.5 * sigma


def test_noise_graph_slots_uncorrelated(mol_spec):
    sched = Schedule.make("cosine")
    g1 = GraphInstance.from_upper([0, 1, 2], np.array([1, 0, 2]))
    rng = RngStream(10)
    n_graphs = 100_000
    flags = np.empty((n_graphs, 6), dtype=np.float64)
    for i in range(n_graphs):
        _, mask = noise_graph(g1, 0.5, sched, mol_spec, rng.child(i))
        flags[i] = np.concatenate([mask.node_flags, mask.upper_flags()])
    corr = np.corrcoef(flags.T)
    off = corr[~np.eye(6, dtype=bool)]
    assert np.abs(off).max() < 0.01


def test_noise_graph_mirrors_edges(mol_spec):
    sched = Schedule.make("cosine")
    g1 = GraphInstance.from_upper([0, 1, 2, 3], np.array([1, 2, 0, 1, 2, 0]))
    for i in range(50):
        z, m = noise_graph(g1, 0.4, sched, mol_spec, RngStream(11).child(i))
        assert np.array_equal(z.edge_labels, z.edge_labels.T)
        assert np.array_equal(m.edge_flags, m.edge_flags.T)


# ---- transition matrices -------------------------------------------------


def q0_variants():
    return {
        "mask": CategoricalDist.delta(2, 3),
        "marginal": CategoricalDist(np.array([0.2, 0.5, 0.3])),
        "uniform": CategoricalDist.uniform(3),
    }


def test_transition_identity_at_beta_zero():
    for q0 in q0_variants().values():
        m = forward_transition_matrix(0.0, q0)
        assert np.allclose(m.entries, np.eye(3), atol=1e-15)


def test_mask_transition_rows():
    schema_q0 = CategoricalDist.delta(2, 3)
    m = forward_transition_matrix(0.3, schema_q0).entries
    assert np.allclose(m[0], [0.7, 0.0, 0.3])
    assert np.allclose(m[2], [0.0, 0.0, 1.0])  # absorbing


def test_noise_matrix_idempotent():
    for q0 in q0_variants().values():
        a = np.tile(q0.probs, (q0.k, 1))
        assert np.abs(a @ a - a).max() < 1e-14


def test_compose_forward_closed_form():
    for q0 in q0_variants().values():
        composed = compose_forward([0.5, 0.5], q0).entries
        a = np.tile(q0.probs, (q0.k, 1))
        closed = 0.25 * np.eye(3) + 0.75 * a
        assert np.abs(composed - closed).max() < 1e-12


def test_compose_forward_empty_is_identity():
    q0 = CategoricalDist.uniform(4)
    assert np.allclose(compose_forward([], q0).entries, np.eye(4))


def test_forward_equivalence_random_grids():
    """Composed chains equal the one-shot mixture for random beta lists."""
    sched = Schedule.make("cosine")
    rng = RngStream(12)
    for probe in range(100):
        pr = rng.child(probe)
        q0 = list(q0_variants().values())[probe % 3]
        t_target = pr.uniform()
        grid = (4, 16, 64)[probe % 3]
        betas = betas_from_schedule(sched, np.linspace(1.0, t_target, grid + 1))
        assert all(0.0 <= b <= 1.0 for b in betas)
        alpha_bar = float(np.prod([1 - b for b in betas]))
        z1 = int(pr.uniform() * 2)
        row = compose_forward(betas, q0).apply_delta(z1)
        direct = noise_element_law(z1, alpha_bar, q0)
        assert tv_distance(row.probs, direct.probs) < 1e-10


def test_betas_telescope_through_zero_alpha():
    sched = Schedule.make("cosine")
    betas = betas_from_schedule(sched, [1.0, 0.5, 0.0, 0.0])
    assert betas[-1] == 0.0  # 0/0 step contributes nothing
    assert float(np.prod([1 - b for b in betas])) == pytest.approx(0.0, abs=1e-15)
