"""Executable checks for every proposition, lemma, and theorem at desk scale.

Each check returns a CheckResult; the CLI prints one line per check and
the acceptance test suite asserts them. The checks are deterministic
given their seeds.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .critic import (
    ALPHA_CLAMP,
    MpnnCritic,
    TabularCritic,
    critic_example_grad,
    critic_gradient,
    make_critic_training_example,
    optimal_critic,
    train_critic,
)
from .denoiser import (
    MpnnDenoiser,
    TabularDenoiser,
    TrainConfig,
    batch_loss,
    gradient,
)
from .dists import CategoricalDist, mix
from .families import ToyFamily, enumerate_family, generate_dataset, toy_molecule, triangle_free_4
from .graphs import GraphInstance, upper_indices
from .metrics import tv_distance
from .mpnn import MpnnConfig, one_hot_graph_features
from .noising import (
    NoiseSpec,
    betas_from_schedule,
    compose_forward,
    noise_graph,
)
from .oracle import BayesOracle
from .rng import RngStream
from .samplers import (
    corrector_step_law,
    denoising_mixture_law,
    sid_step_law,
)
from .schedule import Schedule


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(fn):
    def wrapper(*args, **kwargs) -> CheckResult:
        start = time.perf_counter()
        name, passed, detail = fn(*args, **kwargs)
        return CheckResult(name, passed, detail, time.perf_counter() - start)

    return wrapper


def _random_dist(rng: RngStream, k: int) -> CategoricalDist:
    w = rng.uniforms(k) + 0.05
    return CategoricalDist.from_weights(w)


# ---- 1: forward-process equivalence -------------------------------------


@_timed
def check_forward_equivalence(seed: int = 101) -> tuple[str, bool, str]:
    """Composed per-step transition matrices equal the one-shot mixture."""
    rng = RngStream(seed)
    schedule = Schedule.make("cosine")
    worst = 0.0
    for probe in range(100):
        pr = rng.child(probe)
        kind = ("mask", "marginal", "uniform")[probe % 3]
        grid = (4, 16, 64)[int(pr.uniform() * 3) % 3]
        k = 3 + int(pr.uniform() * 3)
        if kind == "mask":
            q0 = CategoricalDist.delta(k - 1, k)
        elif kind == "uniform":
            q0 = CategoricalDist.uniform(k)
        else:
            q0 = _random_dist(pr.child(1), k)
        z1 = int(pr.uniform() * (k - 1))
        t_target = pr.uniform()
        times = np.linspace(1.0, t_target, grid + 1)
        betas = betas_from_schedule(schedule, times)
        composed = compose_forward(betas, q0).apply_delta(z1)
        alpha_bar = float(np.prod([1.0 - b for b in betas]))
        direct = mix(CategoricalDist.delta(z1, k), q0, alpha_bar)
        worst = max(worst, tv_distance(composed.probs, direct.probs))
    return (
        "forward equivalence (composed matrices vs mixture)",
        worst < 1e-10,
        f"max TV {worst:.2e} over 100 probes (tolerance 1e-10)",
    )


# ---- 2 & 3: one-step law identities --------------------------------------


def _probe_states(seed: int, count: int):
    """(family, oracle-per-kind, probes) for the one-step law checks."""
    family = triangle_free_4()
    schedule = Schedule.make("cosine")
    instances = [g for g, _ in enumerate_family(family)]
    node_m = np.zeros(family.schema.d_x)
    edge_m = np.zeros(family.schema.d_e)
    for g in instances:
        node_m += np.bincount(g.node_labels, minlength=family.schema.d_x)
        edge_m += np.bincount(g.upper_edges(), minlength=family.schema.d_e)
    specs = {
        "mask": NoiseSpec.mask(family.schema),
        "marginal": NoiseSpec.marginal(family.schema, node_m / node_m.sum(), edge_m / edge_m.sum()),
        "uniform": NoiseSpec.uniform(family.schema),
    }
    oracles = {kind: BayesOracle(family, spec) for kind, spec in specs.items()}
    rng = RngStream(seed)
    probes = []
    for i in range(count):
        pr = rng.child(i)
        kind = ("mask", "marginal", "uniform")[i % 3]
        g1 = instances[int(pr.uniform() * len(instances))]
        t = 0.9 * pr.uniform()
        s = t + (1.0 - t) * max(pr.uniform(), 0.05)
        z_t, _ = noise_graph(g1, t, schedule, specs[kind], pr.child(1))
        probes.append((kind, z_t, t, s))
    return schedule, specs, oracles, probes


@_timed
def check_one_step_identity(seed: int = 202) -> tuple[str, bool, str]:
    """The sid step law equals alpha_s * posterior + (1 - alpha_s) * q0."""
    schedule, specs, oracles, probes = _probe_states(seed, 50)
    worst = 0.0
    for kind, z_t, t, s in probes:
        nl, el = sid_step_law(z_t, oracles[kind], t, s, schedule, specs[kind])
        nd, ed = denoising_mixture_law(z_t, oracles[kind], t, s, schedule, specs[kind])
        worst = max(worst, np.abs(nl - nd).sum(axis=1).max() * 0.5)
        worst = max(worst, np.abs(el - ed).sum(axis=1).max() * 0.5)
    return (
        "one-step denoising identity (two-stage law vs mixture)",
        worst < 1e-12,
        f"max element TV {worst:.2e} over 50 probes (tolerance 1e-12)",
    )


@_timed
def check_corrector_equivalence(seed: int = 202) -> tuple[str, bool, str]:
    """Maximal corrector step law coincides with the sid step law."""
    schedule, specs, oracles, probes = _probe_states(seed, 50)
    worst = 0.0
    for kind, z_t, t, s in probes:
        nl, el = sid_step_law(z_t, oracles[kind], t, s, schedule, specs[kind])
        nc, ec = corrector_step_law(z_t, oracles[kind], t, s, schedule, specs[kind])
        worst = max(worst, np.abs(nl - nc).sum(axis=1).max() * 0.5)
        worst = max(worst, np.abs(el - ec).sum(axis=1).max() * 0.5)
    return (
        "maximal corrector equivalence",
        worst < 1e-12,
        f"max element TV {worst:.2e} over 50 probes (tolerance 1e-12)",
    )


# ---- 4: optimal critic ----------------------------------------------------


def pooled_marginals(family: ToyFamily) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot-kind label frequencies of the family distribution."""
    node_m = np.zeros(family.schema.d_x)
    edge_m = np.zeros(family.schema.d_e)
    for g, p in enumerate_family(family):
        n, m = g.n, g.n * (g.n - 1) // 2
        node_m += p * np.bincount(g.node_labels, minlength=family.schema.d_x) / n
        if m:
            edge_m += p * np.bincount(g.upper_edges(), minlength=family.schema.d_e) / m
    return node_m / node_m.sum(), edge_m / edge_m.sum()


def train_critic_stages(dataset, denoiser, critic, stages, schedule, spec, rng) -> None:
    """Decaying-rate schedule used to squeeze SGD noise at desk scale."""
    for k, (epochs, lr, momentum) in enumerate(stages):
        cfg = TrainConfig(epochs=epochs, batch_size=64, lr=lr, momentum=momentum)
        train_critic(dataset, denoiser, critic, cfg, schedule, spec, rng.child(k))


_SGD_STAGES = ((10, 0.5, 0.9), (20, 0.2, 0.9), (30, 0.08, 0.9), (30, 0.02, 0.9))


def _gauss_legendre_01(n: int = 96) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def exact_trained_residual(p_data: float, p_pred: float, schedule: Schedule) -> float:
    """Minimize the critic objective exactly for one value bucket.

    The bucket's expected binary cross-entropy, with t uniform, is

        L(f) = int_0^1 a_t p_data sp(-f - l_t) + (1 - a_t) p_pred sp(f + l_t) dt

    with l_t the schedule's logit. It is strictly convex in f; Newton on a
    Gauss-Legendre quadrature of the integral finds the minimizer to
    machine precision. This is the trained table value in the infinite-data
    limit, computed without sampling noise.
    """
    ts, ws = _gauss_legendre_01()
    alphas = np.array([schedule.alpha(float(t)) for t in ts])
    alphas = np.clip(alphas, ALPHA_CLAMP, 1.0 - ALPHA_CLAMP)
    ells = np.log(alphas / (1.0 - alphas))
    f = 0.0
    for _ in range(200):
        s = 1.0 / (1.0 + np.exp(-(f + ells)))
        grad = float(np.sum(ws * (s * (alphas * p_data + (1 - alphas) * p_pred) - alphas * p_data)))
        hess = float(np.sum(ws * s * (1 - s) * (alphas * p_data + (1 - alphas) * p_pred)))
        step = grad / hess
        f -= step
        if abs(step) < 1e-14:
            break
    return f


def _exact_tabular_critic(family: ToyFamily, p_pred_node, p_pred_edge, schedule: Schedule):
    """Tabular critic trained on the exact expected objective.

    Requires bucket prediction densities that do not depend on the noise
    level (an exact-posterior denoiser is calibrated, a frozen
    uniform-output one is constant), which is what makes the infinite-data
    objective separable per bucket and alpha-free.
    """
    spec = NoiseSpec.mask(family.schema)
    critic = TabularCritic.create(spec.schema)
    node_m, edge_m = pooled_marginals(family)
    for v in range(family.schema.d_x):
        if node_m[v] > 0:
            critic.params["node_logits"][v] = exact_trained_residual(node_m[v], p_pred_node[v], schedule)
    for v in range(family.schema.d_e):
        if edge_m[v] > 0:
            critic.params["edge_logits"][v] = exact_trained_residual(edge_m[v], p_pred_edge[v], schedule)
    return critic, spec, node_m, edge_m


_PROBE_ALPHAS = (0.15, 0.35, 0.55, 0.75, 0.9)


@_timed
def check_optimal_critic(seed: int = 303) -> tuple[str, bool, str]:
    """The trained tabular critic matches the closed-form optimum.

    Calibration run: against the exact posterior denoiser the per-value
    prediction density equals the data density (the posterior is
    calibrated), so the optimal keep probability is alpha itself (the
    density-equality lemma, live). Discriminative run: against a frozen
    uniform-output denoiser the ratio is family-marginal over uniform,
    strict in both directions.

    Training for the probe comparison minimizes the exact expected
    objective (enumeration over graphs and masks, quadrature over t);
    stochastic training cannot hit 1e-3 inside the runtime budget, so the
    production SGD trainer is held to a looser agreement check against
    the same optimum here and in the module tests.
    """
    schedule = Schedule.make("cosine")

    # calibration: exact denoiser on the two-instance family
    fam_a = toy_molecule((1, 2), n_min=2, n_max=2)
    node_a, edge_a = pooled_marginals(fam_a)
    critic_a, _, _, _ = _exact_tabular_critic(fam_a, node_a, edge_a, schedule)
    worst_a = 0.0
    for alpha in _PROBE_ALPHAS:
        for kind, vals, marg in (("node", (0, 1), node_a), ("edge", (1, 2), edge_a)):
            table = critic_a.params["node_logits" if kind == "node" else "edge_logits"]
            for v in vals:
                want = optimal_critic(marg[v], marg[v], alpha)  # equals alpha
                got = _sigmoid_scalar(table[v] + _logit_scalar(alpha))
                worst_a = max(worst_a, abs(got - want))

    # discriminative: frozen uniform denoiser on the five-instance family
    fam_b = toy_molecule((1, 1, 2), n_min=2, n_max=2)
    critic_b, spec_b, node_b, edge_b = _exact_tabular_critic(
        fam_b,
        np.full(3, 1.0 / fam_b.schema.d_x),
        np.full(3, 1.0 / fam_b.schema.d_e),
        schedule,
    )
    probes = [("node", v, node_b[v], 1.0 / fam_b.schema.d_x) for v in range(3)]
    probes += [("edge", v, edge_b[v], 1.0 / fam_b.schema.d_e) for v in (1, 2)]
    worst_b = 0.0
    worst_odds = 0.0
    sign_ok = True
    for alpha in _PROBE_ALPHAS:
        for kind, v, p_data, p_pred in probes:
            table = critic_b.params["node_logits" if kind == "node" else "edge_logits"]
            a_hat = _sigmoid_scalar(table[v] + _logit_scalar(alpha))
            want = optimal_critic(p_data, p_pred, alpha)
            worst_b = max(worst_b, abs(a_hat - want))
            gap = p_data - p_pred
            if abs(gap) > 1e-9 and np.sign(a_hat - alpha) != np.sign(gap):
                sign_ok = False
            odds = (1.0 / alpha - 1.0) / (1.0 / a_hat - 1.0)
            worst_odds = max(worst_odds, abs(odds - p_data / p_pred) / (p_data / p_pred))

    # the production SGD trainer heads to the same optimum (loose tolerance:
    # its asymptotic noise floor at this budget)
    uniform_den = TabularDenoiser.create(spec_b.schema)
    instances = [g for g, _ in enumerate_family(fam_b)]
    sgd_critic = TabularCritic.create(spec_b.schema)
    train_critic_stages(
        instances * 100, uniform_den, sgd_critic, _SGD_STAGES, schedule, spec_b, RngStream(seed, 2)
    )
    sgd_gap = max(
        float(np.max(np.abs(sgd_critic.params["node_logits"] - critic_b.params["node_logits"]))),
        float(
            np.max(
                np.abs(sgd_critic.params["edge_logits"][1:] - critic_b.params["edge_logits"][1:])
            )
        ),
    )
    # out-of-distribution boundary: zero data density drives the keep
    # probability toward zero (SGD table, finite but strongly negative)
    oob = _sigmoid_scalar(sgd_critic.params["edge_logits"][0] + _logit_scalar(0.5))
    boundary_ok = oob < 0.05
    passed = (
        worst_a < 1e-3 and worst_b < 1e-3 and sign_ok and worst_odds < 1e-2
        and boundary_ok and sgd_gap < 0.2
    )
    return (
        "optimal critic convergence",
        passed,
        f"calibration max err {worst_a:.1e}, discriminative max err {worst_b:.1e}, "
        f"odds-ratio rel err {worst_odds:.1e}, signs {'ok' if sign_ok else 'BAD'}, "
        f"oob keep prob {oob:.3f}, sgd-vs-exact gap {sgd_gap:.3f} (tolerances 1e-3 / 1e-2)",
    )


def _sigmoid_scalar(x: float) -> float:
    return 1.0 / (1.0 + np.exp(-x)) if x >= 0 else float(np.exp(x) / (1.0 + np.exp(x)))


def _logit_scalar(alpha: float) -> float:
    return float(np.log(alpha / (1.0 - alpha)))


# ---- 5: mask collapse -----------------------------------------------------


@_timed
def check_mask_collapse(seed: int = 404) -> tuple[str, bool, str]:
    """Corrupted slot values carry nothing: rewriting them leaves the
    factored posterior bit-identical."""
    schedule = Schedule.make("cosine")
    rng = RngStream(seed)
    families = [triangle_free_4(), toy_molecule((1, 2, 3, 4), n_min=3, n_max=3)]
    exact = True
    for probe in range(100):
        pr = rng.child(probe)
        family = families[probe % 2]
        kind = ("marginal", "uniform")[probe % 2 == 0]
        if kind == "uniform":
            spec = NoiseSpec.uniform(family.schema)
        else:
            node_m = np.ones(family.schema.d_x)
            edge_m = np.arange(1, family.schema.d_e + 1, dtype=np.float64)
            spec = NoiseSpec.marginal(family.schema, node_m / node_m.sum(), edge_m / edge_m.sum())
        oracle = BayesOracle(family, spec)
        instances = [g for g, _ in enumerate_family(family)]
        g1 = instances[int(pr.uniform() * len(instances))]
        t = pr.uniform()
        z_t, kept = noise_graph(g1, t, schedule, spec, pr.child(1))
        out1 = oracle.predict_factored(z_t, kept, schedule.alpha(t))
        # rewrite every corrupted slot with an out-of-vocabulary sentinel
        x = z_t.node_labels.copy()
        x[~kept.node_flags] = family.schema.d_x
        iu, ju = upper_indices(z_t.n)
        upper = z_t.upper_edges().copy()
        upper[~kept.upper_flags()] = family.schema.d_e
        masked = GraphInstance.from_upper(x, upper)
        out2 = oracle.predict_factored(masked, kept, schedule.alpha(t))
        if not (
            np.array_equal(out1.node_probs, out2.node_probs)
            and np.array_equal(out1.edge_probs, out2.edge_probs)
        ):
            exact = False
    return (
        "mask collapse (corrupted slots are uninformative)",
        exact,
        "posterior bit-identical under corrupted-slot rewriting on 100 probes"
        if exact
        else "posterior changed on some probe",
    )


# ---- 6: gradient correctness ----------------------------------------------


def _kink_margin(core, params, feats) -> float:
    margin = np.inf
    for x_feat, e_feat in feats:
        _, _, cache = core.forward(params, x_feat, e_feat)
        for lc in cache["layers"]:
            for key in ("pre_h", "fe_a1", "fe_a2", "fn_b1", "fn_b2"):
                a = np.abs(lc[key])
                if a.size:
                    margin = min(margin, float(a.min()))
    return margin


def _fd_check(loss_fn, params, analytic, h: float = 1e-5) -> float:
    vec = params.to_vector()
    gvec = analytic.to_vector()
    probe = params.copy()
    worst = 0.0
    for i in range(vec.size):
        v = vec.copy()
        v[i] += h
        probe.from_vector(v)
        up = loss_fn(probe)
        v[i] -= 2 * h
        probe.from_vector(v)
        down = loss_fn(probe)
        fd = (up - down) / (2 * h)
        rel = abs(fd - gvec[i]) / max(abs(fd), abs(gvec[i]), 1e-5)
        worst = max(worst, rel)
    return worst


@_timed
def check_gradients(seed: int = 505) -> tuple[str, bool, str]:
    """Reverse-mode gradients match central finite differences everywhere."""
    family = toy_molecule((1, 2, 3), n_min=3, n_max=4)
    spec = NoiseSpec.mask(family.schema)
    schedule = Schedule.make("cosine")
    cfg = MpnnConfig(hidden=8, layers=1)
    data = generate_dataset(family, 2, RngStream(seed, 1))
    batch = []
    for i, g1 in enumerate(data):
        ex = RngStream(seed, 2).child(i)
        t = 0.3 + 0.4 * ex.uniform()
        z_t, _ = noise_graph(g1, t, schedule, spec, ex.child(1))
        batch.append((z_t, schedule.alpha(t), g1))

    den_worst = cri_worst = np.inf
    for cand in range(60):  # pick an init whose preactivations sit clear of relu kinks
        den = MpnnDenoiser.create(spec.schema, cfg, RngStream(seed, 3).child(cand))
        feats = [den._features(z, a) for z, a, _ in batch]
        if _kink_margin(den.core, den.params, feats) > 2e-3:
            break
    grads = gradient(den, batch, gamma=None)
    den_worst = _fd_check(lambda p: _loss_with(den, p, batch), den.params, grads)

    crit_batch = []
    oracle = BayesOracle(family, spec)
    for i, g1 in enumerate(data):
        ex = RngStream(seed, 4).child(i)
        t = 0.3 + 0.4 * ex.uniform()
        z_hat, kept = make_critic_training_example(g1, t, schedule, spec, oracle, ex.child(1))
        crit_batch.append((z_hat, schedule.alpha(t), kept))
    for cand in range(60):
        cri = MpnnCritic.create(spec.schema, cfg, RngStream(seed, 5).child(cand))
        feats = [
            one_hot_graph_features(z, cri.schema.d_x, cri.schema.d_e, a)
            for z, a, _ in crit_batch
        ]
        if _kink_margin(cri.core, cri.params, feats) > 2e-3:
            break
    cgrads = critic_gradient(cri, crit_batch)
    cri_worst = _fd_check(lambda p: _critic_loss_with(cri, p, crit_batch), cri.params, cgrads)

    passed = den_worst < 1e-4 and cri_worst < 1e-4
    return (
        "gradient correctness (denoiser and critic vs finite differences)",
        passed,
        f"denoiser max rel err {den_worst:.2e}, critic max rel err {cri_worst:.2e} "
        f"(tolerance 1e-4, h=1e-5, {den.params.size}+{cri.params.size} coordinates)",
    )


def _loss_with(model, params, batch) -> float:
    saved = model.params
    model.params = params
    try:
        return batch_loss(model, batch, gamma=None)
    finally:
        model.params = saved


def _critic_loss_with(model, params, batch) -> float:
    saved = model.params
    model.params = params
    try:
        total = 0.0
        for z_hat, alpha, kept in batch:
            total += critic_example_grad(model, z_hat, alpha, kept, None, 0.0)
        return total / len(batch)
    finally:
        model.params = saved


# ---- 7: permutation equivariance -------------------------------------------


@_timed
def check_equivariance(seed: int = 606) -> tuple[str, bool, str]:
    family = toy_molecule((1, 2, 3, 4), n_min=5, n_max=6)
    spec = NoiseSpec.mask(family.schema)
    cfg = MpnnConfig(hidden=16, layers=2)
    model = MpnnDenoiser.create(spec.schema, cfg, RngStream(seed, 1))
    rng = RngStream(seed, 2)
    worst = 0.0
    for gi in range(5):
        gr = rng.child(gi)
        n = 5 + gi % 2
        x = np.minimum((gr.uniforms(n) * spec.schema.node_vocab).astype(np.int64), spec.schema.node_vocab - 1)
        m = n * (n - 1) // 2
        upper = np.minimum((gr.uniforms(m) * spec.schema.edge_vocab).astype(np.int64), spec.schema.edge_vocab - 1)
        z_t = GraphInstance.from_upper(x, upper)
        alpha = gr.uniform()
        base = model.predict(z_t, alpha)
        iu, ju = upper_indices(n)
        pair_pos = {(int(iu[k]), int(ju[k])): k for k in range(m)}
        for pi in range(20):
            perm = gr.child(pi).permutation(n)
            out = model.predict(z_t.permuted(perm), alpha)
            worst = max(worst, float(np.abs(out.node_probs - base.node_probs[perm]).max()))
            for k in range(m):
                a, b = int(perm[iu[k]]), int(perm[ju[k]])
                src = pair_pos[(min(a, b), max(a, b))]
                worst = max(worst, float(np.abs(out.edge_probs[k] - base.edge_probs[src]).max()))
    return (
        "permutation equivariance",
        worst < 1e-10,
        f"max abs deviation {worst:.2e} over 5 graphs x 20 permutations (tolerance 1e-10)",
    )


# ---- 8: end-to-end distribution recovery ------------------------------------


def sid_exact_distribution(T: int = 8) -> tuple[float, dict]:
    """Propagate the exact sid trajectory law on the four-node family.

    State space: 2 node labels (clean, mask) on 4 slots and 3 edge labels
    on 6 slots. Under mask noise the exact clean posterior is uniform
    over the instances consistent with the kept slots, and the joint
    prediction is one of those instances, so a step factorizes into a
    posterior-over-instances update followed by independent re-masking:

        p'(Z') = f(Z') * sum_H w(H) [Z' consistent with H]

    where f collects the alpha_s keep/mask factors of the target state
    and w is the current instance posterior mixed over source states.
    The law at t=1 is compared against the uniform family distribution.
    """
    family = triangle_free_4()
    schedule = Schedule.make("cosine")
    fam_edges = np.stack([g.upper_edges() for g, _ in enumerate_family(family)])  # (F, 6)
    F = fam_edges.shape[0]
    node_states = np.array(list(itertools.product(range(2), repeat=4)), dtype=np.int64)
    edge_states = np.array(list(itertools.product(range(3), repeat=6)), dtype=np.int64)
    NS = np.repeat(node_states, len(edge_states), axis=0)
    ES = np.tile(edge_states, (len(node_states), 1))
    S = NS.shape[0]
    # consistency of every state with every instance (nodes carry one label,
    # so only kept edge slots discriminate)
    cons = np.all((ES[:, None, :] == fam_edges[None, :, :]) | (ES[:, None, :] == 2), axis=2)
    counts = cons.sum(axis=1)
    # posterior over instances given a state: uniform over the consistent
    # subset, prior fallback for inconsistent states (unreachable here)
    posterior = np.where(counts[:, None] > 0, cons / np.maximum(counts, 1)[:, None], 1.0 / F)
    n_mask = (NS == 1).sum(axis=1)
    e_mask_count = (ES == 2).sum(axis=1)
    start = int(np.flatnonzero((NS == 1).all(axis=1) & (ES == 2).all(axis=1))[0])
    p = np.zeros(S)
    p[start] = 1.0
    for k in range(T):
        alpha_s = schedule.alpha((k + 1) / T)
        w = p @ posterior  # (F,) instance posterior mixed over sources
        target = alpha_s ** (4 - n_mask) * (1.0 - alpha_s) ** n_mask
        target = target * alpha_s ** (6 - e_mask_count) * (1.0 - alpha_s) ** e_mask_count
        p = target * (cons @ w)
    valid_keys = {g.key() for g, _ in enumerate_family(family)}
    p_target = np.zeros(S)
    for s_idx in np.flatnonzero((NS < 2).all(axis=1) & (ES < 2).all(axis=1)):
        g = GraphInstance.from_upper(NS[s_idx], ES[s_idx])
        if g.key() in valid_keys:
            p_target[s_idx] = 1.0 / len(valid_keys)
    tv = 0.5 * float(np.abs(p - p_target).sum())
    return tv, {"mass_check": float(p.sum())}


@_timed
def check_distribution_recovery() -> tuple[str, bool, str]:
    tv, info = sid_exact_distribution(T=8)
    return (
        "end-to-end distribution recovery (exact trajectory law, T=8)",
        tv < 0.02,
        f"TV {tv:.5f} from the family distribution (tolerance 0.02, "
        f"total mass {info['mass_check']:.12f})",
    )


def all_checks() -> list[CheckResult]:
    checks = [
        check_forward_equivalence(),
        check_one_step_identity(),
        check_corrector_equivalence(),
        check_optimal_critic(),
        check_mask_collapse(),
        check_gradients(),
        check_equivariance(),
        check_distribution_recovery(),
    ]
    return checks
