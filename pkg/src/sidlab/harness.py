"""Experiment orchestration: configs, dataset/model lifecycle, ablation grid.

Everything a run produces (dataset file, model files, metrics CSV) is a
pure function of the config plus seed, byte for byte, so re-running a
config is a no-op diff.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .critic import MpnnCritic, cid_generate, load_critic, save_critic, train_critic
from .denoiser import (
    MpnnDenoiser,
    TabularDenoiser,
    TrainConfig,
    load_model,
    save_model,
    train_denoiser,
)
from .dists import sample_index
from .families import (
    ToyFamily,
    empirical_label_marginals,
    empirical_size_dist,
    generate_dataset,
    toy_molecule,
    triangle_free_4,
)
from .graphs import GraphInstance, load_graphs, save_graphs
from .metrics import MetricsRow, evaluate_batch
from .mpnn import MpnnConfig
from .noising import NoiseSpec
from .rng import RngStream
from .samplers import CORRECTOR, DDM_EXACT, DFM_RATE, SID, SamplerSpec, generate
from .schedule import Schedule

CONFIG_FORMAT = "sidlab-config"

SAMPLER_NAMES = {"sid": SID, "ddm": DDM_EXACT, "dfm": DFM_RATE, "corrector": CORRECTOR, "cid": None}

CSV_HEADER = "sampler,nfe,validity,unique,novel,degree_tv,seed"


class ConfigError(Exception):
    pass


class MissingModelError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    family: ToyFamily
    noise_kind: str
    schedule_kind: str
    dataset_size: int
    denoiser_kind: str
    denoiser_mpnn: MpnnConfig
    denoiser_train: TrainConfig
    critic_enabled: bool
    critic_mpnn: MpnnConfig
    critic_train: TrainConfig
    samplers: tuple
    nfe: tuple
    samples_per_cell: int

    def __post_init__(self):
        if not self.nfe or any(t < 1 for t in self.nfe):
            raise ConfigError("nfe list must be non-empty with entries >= 1")
        if self.samples_per_cell < 1:
            raise ConfigError("samples_per_cell must be >= 1")
        for s in self.samplers:
            if s not in SAMPLER_NAMES:
                raise ConfigError(f"unknown sampler {s!r}")
        if "cid" in self.samplers and not self.critic_enabled:
            raise ConfigError("cid sampling requires the critic")
        if "cid" in self.samplers and self.noise_kind != "mask":
            raise ConfigError("cid sampling requires mask noise")
        if self.noise_kind not in ("mask", "marginal", "uniform"):
            raise ConfigError(f"unknown noise kind {self.noise_kind!r}")


def _family_from(d: dict) -> ToyFamily:
    kind = d.get("kind")
    if kind == "triangle_free_4":
        return triangle_free_4()
    if kind == "toy_molecule":
        return toy_molecule(
            valences=tuple(d.get("valences", (1, 2, 3, 4))),
            n_min=d.get("n_min", 3),
            n_max=d.get("n_max", 8),
        )
    raise ConfigError(f"unknown family kind {kind!r}")


def _train_from(d: dict) -> TrainConfig:
    return TrainConfig(
        epochs=d.get("epochs", 10),
        batch_size=d.get("batch_size", 32),
        lr=d.get("lr", 2e-4),
        momentum=d.get("momentum", 0.9),
        holdout_fraction=d.get("holdout", 0.0),
    )


def config_from_dict(d: dict) -> ExperimentConfig:
    try:
        if d.get("format", CONFIG_FORMAT) != CONFIG_FORMAT:
            raise ConfigError(f"not a {CONFIG_FORMAT} document")
        den = d.get("denoiser", {})
        cri = d.get("critic", {})
        return ExperimentConfig(
            seed=int(d["seed"]),
            family=_family_from(d["family"]),
            noise_kind=d.get("noise", "mask"),
            schedule_kind=d.get("schedule", "cosine"),
            dataset_size=int(d.get("dataset", {}).get("size", 1000)),
            denoiser_kind=den.get("kind", "mpnn"),
            denoiser_mpnn=MpnnConfig(den.get("hidden", 32), den.get("layers", 2)),
            denoiser_train=_train_from(den),
            critic_enabled=bool(cri.get("enabled", False)),
            critic_mpnn=MpnnConfig(cri.get("hidden", 32), cri.get("layers", 2)),
            critic_train=_train_from(cri),
            samplers=tuple(d.get("samplers", ("sid",))),
            nfe=tuple(int(t) for t in d.get("nfe", (16,))),
            samples_per_cell=int(d.get("samples_per_cell", 100)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if seed_override is not None:
        doc["seed"] = seed_override
    return config_from_dict(doc)


def build_noise(config: ExperimentConfig, dataset: list[GraphInstance]) -> NoiseSpec:
    schema = config.family.schema
    if config.noise_kind == "mask":
        return NoiseSpec.mask(schema)
    if config.noise_kind == "uniform":
        return NoiseSpec.uniform(schema)
    node_m, edge_m = empirical_label_marginals(dataset, schema)
    return NoiseSpec.marginal(schema, node_m, edge_m)


def ensure_dataset(config: ExperimentConfig, run_dir: str) -> list[GraphInstance]:
    path = os.path.join(run_dir, "dataset.jsonl")
    if os.path.exists(path):
        return load_graphs(path)
    os.makedirs(run_dir, exist_ok=True)
    rng = RngStream(config.seed, 1)
    dataset = generate_dataset(config.family, config.dataset_size, rng)
    save_graphs(path, dataset)
    return dataset


def train_models(config: ExperimentConfig, dataset: list[GraphInstance], run_dir: str):
    """Train (or retrain) the denoiser and, if enabled, the critic; saves both."""
    os.makedirs(run_dir, exist_ok=True)
    schedule = Schedule.make(config.schedule_kind)
    spec = build_noise(config, dataset)
    schema = spec.schema
    if config.denoiser_kind == "tabular":
        denoiser = TabularDenoiser.create(schema)
    elif config.denoiser_kind == "mpnn":
        denoiser = MpnnDenoiser.create(schema, config.denoiser_mpnn, RngStream(config.seed, 2))
    else:
        raise ConfigError(f"unknown denoiser kind {config.denoiser_kind!r}")
    train_denoiser(dataset, denoiser, config.denoiser_train, schedule, spec, RngStream(config.seed, 3))
    save_model(os.path.join(run_dir, "denoiser.json"), denoiser)
    critic = None
    if config.critic_enabled:
        critic = MpnnCritic.create(schema, config.critic_mpnn, RngStream(config.seed, 4))
        train_critic(dataset, denoiser, critic, config.critic_train, schedule, spec, RngStream(config.seed, 5))
        save_critic(os.path.join(run_dir, "critic.json"), critic)
    return denoiser, critic


def load_models(config: ExperimentConfig, run_dir: str):
    den_path = os.path.join(run_dir, "denoiser.json")
    if not os.path.exists(den_path):
        raise MissingModelError(f"no denoiser model at {den_path}")
    denoiser = load_model(den_path)
    critic = None
    if config.critic_enabled:
        cri_path = os.path.join(run_dir, "critic.json")
        if not os.path.exists(cri_path):
            raise MissingModelError(f"no critic model at {cri_path}")
        critic = load_critic(cri_path)
    return denoiser, critic


def ensure_models(config: ExperimentConfig, dataset: list[GraphInstance], run_dir: str):
    try:
        return load_models(config, run_dir)
    except MissingModelError:
        return train_models(config, dataset, run_dir)


def make_n_sampler(dataset: list[GraphInstance]):
    sizes, probs = empirical_size_dist(dataset)

    def n_sampler(rng: RngStream) -> int:
        return int(sizes[sample_index(probs, rng.uniform())])

    return n_sampler


def run_cell(
    sampler_name: str,
    nfe: int,
    config: ExperimentConfig,
    dataset: list[GraphInstance],
    denoiser,
    critic,
    spec: NoiseSpec,
    schedule: Schedule,
    rng: RngStream,
) -> list[GraphInstance]:
    n_sampler = make_n_sampler(dataset)
    if sampler_name == "cid":
        if critic is None:
            raise MissingModelError("cid cell requires a trained critic")
        return cid_generate(
            denoiser, critic, nfe, config.samples_per_cell, n_sampler, schedule, spec, rng
        )
    sp = SamplerSpec(kind=SAMPLER_NAMES[sampler_name], T=nfe, noise=spec, schedule=schedule)
    return generate(denoiser, sp, config.samples_per_cell, n_sampler, rng)


def format_row(row: MetricsRow) -> str:
    return (
        f"{row.sampler},{row.nfe},{row.validity:.6f},{row.unique:.6f},"
        f"{row.novel:.6f},{row.degree_tv:.6f},{row.seed}"
    )


def run_ablation(
    config: ExperimentConfig,
    run_dir: str,
    out_csv: str,
    plot: bool = True,
) -> list[MetricsRow]:
    """Generate and score every (sampler, NFE) cell; write the CSV and,
    unless disabled, companion figures next to it."""
    dataset = ensure_dataset(config, run_dir)
    denoiser, critic = ensure_models(config, dataset, run_dir)
    schedule = Schedule.make(config.schedule_kind)
    spec = build_noise(config, dataset)
    rows: list[MetricsRow] = []
    for si, sampler_name in enumerate(config.samplers):
        for nfe in config.nfe:
            rng = RngStream(config.seed, 6).child(si, nfe)
            samples = run_cell(
                sampler_name, nfe, config, dataset, denoiser, critic, spec, schedule, rng
            )
            m = evaluate_batch(samples, dataset, config.family)
            rows.append(
                MetricsRow(
                    sampler=sampler_name,
                    nfe=nfe,
                    validity=m["validity"],
                    unique=m["unique"],
                    novel=m["novel"],
                    degree_tv=m["degree_tv"],
                    seed=config.seed,
                )
            )
    write_csv(out_csv, rows)
    if plot:
        from .plotting import render_ablation_figures

        render_ablation_figures(rows, os.path.splitext(out_csv)[0])
    return rows


def write_csv(path, rows: list[MetricsRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(format_row(row) + "\n")


def read_csv(path) -> list[MetricsRow]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header: {header}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 7:
                continue
            rows.append(
                MetricsRow(
                    sampler=parts[0],
                    nfe=int(parts[1]),
                    validity=float(parts[2]),
                    unique=float(parts[3]),
                    novel=float(parts[4]),
                    degree_tv=float(parts[5]),
                    seed=int(parts[6]),
                )
            )
    return rows
