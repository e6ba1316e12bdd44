"""Command-line harness tying the toolkit into runnable experiments.

    qlatent <command> --config <path> [--set key=value ...] --out <dir>

Commands: ansatz-bench, make-dataset, train-vae, train-ddpm, sample,
evaluate, compare-models.  Exit codes: 0 success, 1 validation error,
2 runtime failure.  Every command writes only inside ``--out``, echoes
its resolved configuration, and reruns with identical settings rewrite
byte-identical CSV/SVG/PPM outputs; wall-clock timing goes to a
separate ``*_runinfo.txt`` sidecar so the data files stay stable.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .ansatz import AnsatzKind, AnsatzSpec, build_ansatz, param_count
from .checkpoint import (
    load_checkpoint,
    load_state_dict,
    save_checkpoint,
    state_dict,
)
from .config import (
    Field,
    load_config_file,
    parse_overrides,
    render_resolved,
    resolve,
)
from .data import (
    FundusParams,
    generate_dataset,
    load_manifest,
    load_split,
    read_ppm,
    write_ppm,
)
from .diagnostics import (
    GradientVarianceSweep,
    entanglement_entropy_stats,
    first_param_gradient_samples,
    fit_bp_slope,
    variance_stderr,
)
from .diffusion import (
    UNet,
    UNetConfig,
    build_schedule,
    ddpm_train_step,
    generate_images,
    latent_scale,
    zero_prediction_baseline,
)
from .layers import QuantumLayer, SamplingSettings, set_sampling
from .metrics import MetricReport, evaluate_sets
from .noise import (
    ConfusionMatrix,
    EmpiricalDistribution,
    NoiseModel,
    expected_hamming_distance,
    mitigate_confusion,
    sample_noisy,
    sampling_control_distance,
)
from .optim import Adam
from .routing import route_to_linear_chain
from .statevector import index_to_bitstring, run_circuit
from .svgplot import LineSeries, write_line_plot
from .vae import VAE, VAEConfig, encode_dataset, vae_train_step


class UsageError(Exception):
    """Bad invocation or configuration; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _f(value: float) -> str:
    """Fixed CSV float formatting so reruns stay byte-identical."""
    return f"{value:.8f}"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([str(v) for v in row])


def _parse_ints(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"expected comma-separated integers: {text!r}") \
            from None


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"expected comma-separated numbers: {text!r}") \
            from None


def _parse_kinds(text: str) -> list[AnsatzKind]:
    kinds = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            kinds.append(AnsatzKind(tok.upper()))
        except ValueError:
            names = ", ".join(k.value for k in AnsatzKind)
            raise ValueError(
                f"unknown ansatz kind {tok!r} (choose from {names})") \
                from None
    if not kinds:
        raise ValueError("no ansatz kinds given")
    return kinds


def _alpha_tag(alpha: float) -> str:
    return "a" + f"{alpha:g}".replace(".", "p")


# ---- shared schema pieces ----------------------------------------------

_SEED = Field("seed", int, 0, help="base RNG seed")
_QUANTUM_FIELDS = [
    Field("quantum", bool, False, help="use quantum residual blocks"),
    Field("q_qubits", int, 4, help="qubits per quantum layer"),
    Field("q_layers", int, 2, help="ansatz layers per quantum layer"),
    Field("q_kind", str, "ESE2", help="ansatz kind for quantum layers"),
]
_EVAL_FIELDS = [
    Field("embed_method", str, "pool", choices=("pool", "project"),
          help="feature embedding for distribution metrics"),
    Field("knn_k", int, 3, help="k for precision/recall neighbourhoods"),
]


def _ansatz_spec_from(cfg: dict) -> AnsatzSpec:
    kind = _parse_kinds(cfg["q_kind"])[0]
    return AnsatzSpec(kind, cfg["q_qubits"], cfg["q_layers"])


def _require_file(path_text: str, what: str) -> Path:
    if not path_text:
        raise ValueError(f"config key {what!r} must be set")
    path = Path(path_text)
    if not path.is_file():
        raise ValueError(f"{what}: no such file: {path}")
    return path


def _load_model_checkpoint(path: Path, expect_kind: str):
    try:
        ckpt = load_checkpoint(path)
    except ValueError as exc:
        raise ValueError(f"corrupt checkpoint {path}: {exc}") from None
    if ckpt.kind != expect_kind:
        raise ValueError(
            f"{path} holds a {ckpt.kind!r} checkpoint, expected "
            f"{expect_kind!r}")
    return ckpt


def _vae_from_checkpoint(ckpt) -> VAE:
    c = ckpt.config
    config = VAEConfig(
        image_size=c["image_size"], in_channels=c["in_channels"],
        latent_channels=c["latent_channels"],
        base_channels=c["base_channels"], kl_weight=c["kl_weight"],
        ssim_weight=c["ssim_weight"], quantum=c["quantum"],
        q_qubits=c["q_qubits"], q_layers=c["q_layers"],
        q_kind=AnsatzKind(c["q_kind"]))
    model = VAE(config, seed=0)
    load_state_dict(model, ckpt.tensors)
    return model


def _unet_from_checkpoint(ckpt) -> tuple[UNet, dict]:
    c = ckpt.config
    config = UNetConfig(
        latent_channels=c["latent_channels"], latent_size=c["latent_size"],
        base_channels=c["base_channels"], time_dim=c["time_dim"],
        num_classes=c["num_classes"], quantum=c["quantum"],
        q_qubits=c["q_qubits"], q_layers=c["q_layers"],
        q_kind=AnsatzKind(c["q_kind"]))
    model = UNet(config, seed=0)
    load_state_dict(model, ckpt.tensors)
    return model, c


def _quantum_layer_report(model) -> tuple[int, int]:
    """(number of quantum layers, circuit parameters per layer)."""
    layers = [m for m in model.iter_modules()
              if isinstance(m, QuantumLayer)]
    if not layers:
        return 0, 0
    return len(layers), param_count(layers[0].spec)


def _load_images_for_training(cfg: dict) -> tuple[np.ndarray, np.ndarray]:
    manifest = _require_file(cfg["data"], "data")
    images, labels = load_split(manifest, "train",
                                quarter_train=cfg["quarter_train"])
    if cfg["max_images"] > 0:
        images = images[:cfg["max_images"]]
        labels = labels[:cfg["max_images"]]
    return images, labels


# ---- ansatz-bench ------------------------------------------------------

SCHEMA_BENCH = [
    _SEED,
    Field("kinds", str, "SE,ESE1,ESE2", help="comma list of ansatz kinds"),
    Field("qubits", str, "4,6,8", help="comma list of qubit counts"),
    Field("layers", int, 6, help="ansatz depth L"),
    Field("gv_samples", int, 100, help="gradient samples per point"),
    Field("ee_draws", int, 30, help="random draws for entropy stats"),
    Field("shots", int, 2000, help="shots per noisy sampling run"),
    Field("readout_alpha", float, 0.05, help="readout flip probability"),
    Field("p1", float, 5e-4, help="one-qubit depolarizing rate"),
    Field("p2", float, 1e-2, help="two-qubit depolarizing rate"),
    Field("trajectories", int, 50, help="Pauli trajectories per run"),
]


def check_bench(cfg: dict, out: Path) -> dict:
    kinds = _parse_kinds(cfg["kinds"])
    qubits = _parse_ints(cfg["qubits"])
    if not qubits or any(n < 2 for n in qubits):
        raise ValueError("qubits: need counts >= 2")
    if sorted(set(qubits)) != qubits:
        raise ValueError("qubits: must be strictly increasing")
    if cfg["gv_samples"] < 30:
        raise ValueError("gv_samples: need >= 30")
    if cfg["ee_draws"] < 2:
        raise ValueError("ee_draws: need >= 2")
    if not 0 <= cfg["readout_alpha"] < 0.5:
        raise ValueError("readout_alpha: must be in [0, 0.5)")
    if cfg["shots"] < cfg["trajectories"]:
        raise ValueError("shots: must be >= trajectories")
    for n in qubits:
        for kind in kinds:
            AnsatzSpec(kind, n, cfg["layers"])
    return {"kinds": kinds, "qubits": qubits}


def run_bench(cfg: dict, out: Path, ctx: dict) -> None:
    kinds, qubits = ctx["kinds"], ctx["qubits"]
    layers = cfg["layers"]
    alpha = cfg["readout_alpha"]
    noise = NoiseModel(readout_alpha=alpha, p1=cfg["p1"], p2=cfg["p2"],
                       trajectories=cfg["trajectories"])
    rows = []
    per_kind: dict[AnsatzKind, dict[str, list]] = {}
    row_seed = cfg["seed"]
    for kind in kinds:
        track = per_kind.setdefault(kind, {
            "params": [], "gv": [], "ee": [], "raw": [], "mit": [],
            "ctl": []})
        for n in qubits:
            spec = AnsatzSpec(kind, n, layers)
            pcount = param_count(spec)
            circuit = build_ansatz(spec, np.zeros(pcount))
            routed = route_to_linear_chain(circuit)
            grads = first_param_gradient_samples(
                circuit, cfg["gv_samples"], row_seed)
            gv = float(np.var(grads, ddof=1))
            gv_err = variance_stderr(grads)
            ee_mean, ee_err = entanglement_entropy_stats(
                spec, cfg["ee_draws"], row_seed + 1)
            rng = np.random.default_rng(row_seed + 2)
            theta = rng.uniform(0.0, 2 * np.pi, pcount)
            state = run_circuit(circuit, theta)
            probs = state.probabilities
            exact = EmpiricalDistribution(n, {
                index_to_bitstring(i, n): float(p)
                for i, p in enumerate(probs) if p > 0})
            noisy = sample_noisy(circuit, theta, noise, cfg["shots"],
                                 row_seed + 3)
            raw_h = expected_hamming_distance(noisy, exact)
            if alpha > 0:
                mit_probs = mitigate_confusion(
                    noisy, ConfusionMatrix.symmetric(n, alpha))
            else:
                mit_probs = noisy.probabilities()
            mitigated = EmpiricalDistribution(n, mit_probs)
            mit_h = expected_hamming_distance(mitigated, exact)
            control = sampling_control_distance(
                state, cfg["shots"], (row_seed + 4, row_seed + 5))
            rows.append([kind.value, n, layers, pcount,
                         circuit.two_qubit_gate_count(),
                         routed.two_qubit_gate_count(), routed.swap_count,
                         _f(gv), _f(gv_err), _f(ee_mean), _f(ee_err),
                         _f(raw_h), _f(mit_h), _f(control)])
            track["params"].append(pcount)
            track["gv"].append(gv)
            track["ee"].append(ee_mean)
            track["raw"].append(raw_h)
            track["mit"].append(mit_h)
            track["ctl"].append(control)
            row_seed += 100
    _write_csv(out / "ansatz_bench.csv",
               ["kind", "n_qubits", "n_layers", "param_count",
                "two_qubit_gates", "routed_two_qubit_gates",
                "inserted_swaps", "gv", "gv_stderr", "ee_mean",
                "ee_stderr", "hamming_raw", "hamming_mitigated",
                "hamming_control"], rows)

    slope_rows = []
    if len(qubits) >= 3:
        for kind in kinds:
            sweep = GradientVarianceSweep(
                kind, layers, list(qubits), cfg["gv_samples"],
                variances=list(per_kind[kind]["gv"]))
            slope_rows.append([kind.value, _f(fit_bp_slope(sweep))])
    _write_csv(out / "bp_slopes.csv", ["kind", "log10_gv_slope"],
               slope_rows)

    write_line_plot(
        out / "gv_vs_qubits.svg",
        [LineSeries(k.value, tuple(qubits),
                    tuple(np.log10(per_kind[k]["gv"])))
         for k in kinds],
        title="gradient variance scaling", xlabel="qubits",
        ylabel="log10 GV")
    write_line_plot(
        out / "ee_vs_params.svg",
        [LineSeries(k.value, tuple(per_kind[k]["params"]),
                    tuple(per_kind[k]["ee"])) for k in kinds],
        title="entanglement entropy", xlabel="parameters",
        ylabel="EE (nats)")
    hamming_series = []
    for k in kinds:
        hamming_series.append(LineSeries(
            f"{k.value} raw", tuple(per_kind[k]["params"]),
            tuple(per_kind[k]["raw"])))
        hamming_series.append(LineSeries(
            f"{k.value} mitigated", tuple(per_kind[k]["params"]),
            tuple(per_kind[k]["mit"])))
        hamming_series.append(LineSeries(
            f"{k.value} control", tuple(per_kind[k]["params"]),
            tuple(per_kind[k]["ctl"])))
    write_line_plot(out / "hamming_vs_params.svg", hamming_series,
                    title="noisy Hamming distance", xlabel="parameters",
                    ylabel="expected Hamming distance")


# ---- make-dataset ------------------------------------------------------

SCHEMA_MAKE_DATASET = [
    _SEED,
    Field("n_images", int, 300, help="total images to generate"),
    Field("image_size", int, 64, help="square image side in pixels"),
]


def check_make_dataset(cfg: dict, out: Path) -> dict:
    if cfg["n_images"] < 5:
        raise ValueError("n_images: need at least 5")
    params = FundusParams(size=cfg["image_size"])
    return {"params": params}


def run_make_dataset(cfg: dict, out: Path, ctx: dict) -> None:
    manifest = generate_dataset(out / "dataset", cfg["n_images"],
                                cfg["seed"], params=ctx["params"])
    rows = load_manifest(manifest)
    counts = {"train": 0, "val": 0, "test": 0}
    for row in rows:
        counts[row["split"]] += 1
    log = [f"manifest = {manifest}"]
    log += [f"{split} images = {counts[split]}"
            for split in ("train", "val", "test")]
    (out / "make_dataset_log.txt").write_text("\n".join(log) + "\n")


# ---- train-vae ---------------------------------------------------------

SCHEMA_TRAIN_VAE = [
    _SEED,
    Field("data", str, "", help="path to a dataset manifest.csv"),
    Field("epochs", int, 2, help="training epochs"),
    Field("batch_size", int, 16, help="images per step"),
    Field("learning_rate", float, 1e-3, help="Adam learning rate"),
    Field("image_size", int, 64, help="expected image side"),
    Field("base_channels", int, 32, help="first conv width"),
    Field("latent_channels", int, 4, help="latent channels"),
    Field("kl_weight", float, 1e-6, help="KL term weight"),
    Field("ssim_weight", float, 1.0, help="SSIM term weight"),
    Field("quarter_train", bool, False, help="keep every 4th train row"),
    Field("max_images", int, 0, help="cap train images (0 = all)"),
] + _QUANTUM_FIELDS


def check_train_vae(cfg: dict, out: Path) -> dict:
    if cfg["epochs"] < 1 or cfg["batch_size"] < 1:
        raise ValueError("epochs and batch_size must be >= 1")
    if cfg["learning_rate"] <= 0:
        raise ValueError("learning_rate: must be > 0")
    config = VAEConfig(
        image_size=cfg["image_size"],
        latent_channels=cfg["latent_channels"],
        base_channels=cfg["base_channels"], kl_weight=cfg["kl_weight"],
        ssim_weight=cfg["ssim_weight"], quantum=cfg["quantum"],
        q_qubits=cfg["q_qubits"], q_layers=cfg["q_layers"],
        q_kind=_parse_kinds(cfg["q_kind"])[0])
    images, labels = _load_images_for_training(cfg)
    if images.shape[2] != cfg["image_size"]:
        raise ValueError(
            f"image_size: dataset images are {images.shape[2]}px, "
            f"config says {cfg['image_size']}")
    return {"config": config, "images": images}


def _vae_config_echo(config: VAEConfig) -> dict:
    return {
        "image_size": config.image_size, "in_channels": config.in_channels,
        "latent_channels": config.latent_channels,
        "base_channels": config.base_channels,
        "kl_weight": config.kl_weight, "ssim_weight": config.ssim_weight,
        "quantum": config.quantum, "q_qubits": config.q_qubits,
        "q_layers": config.q_layers, "q_kind": config.q_kind.value,
    }


def run_train_vae(cfg: dict, out: Path, ctx: dict) -> None:
    config, images = ctx["config"], ctx["images"]
    rng = np.random.default_rng(cfg["seed"])
    model = VAE(config, seed=cfg["seed"])
    optimizer = Adam(model.parameters(), lr=cfg["learning_rate"])
    echo = _vae_config_echo(config)
    n = images.shape[0]
    rows = []
    epoch_means = []
    step = 0
    for epoch in range(1, cfg["epochs"] + 1):
        perm = rng.permutation(n)
        totals = []
        for lo in range(0, n, cfg["batch_size"]):
            batch = images[perm[lo:lo + cfg["batch_size"]]]
            parts = vae_train_step(model, optimizer, batch, rng)
            step += 1
            totals.append(parts["total"])
            rows.append([epoch, step, _f(parts["l1"]), _f(parts["ssim"]),
                         _f(parts["kl"]), _f(parts["total"])])
        epoch_means.append(float(np.mean(totals)))
        save_checkpoint(out / f"vae_ep{epoch}.qldm", "vae", echo,
                        state_dict(model))
    save_checkpoint(out / "vae.qldm", "vae", echo, state_dict(model))
    _write_csv(out / "vae_loss.csv",
               ["epoch", "step", "l1", "ssim", "kl", "total"], rows)
    write_line_plot(
        out / "vae_loss.svg",
        [LineSeries("total", tuple(range(1, step + 1)),
                    tuple(float(r[5]) for r in rows))],
        title="autoencoder training loss", xlabel="step", ylabel="loss")
    n_q, per_layer = _quantum_layer_report(model)
    log = [
        f"train images = {n}",
        f"model parameters = {model.parameter_count()}",
        f"quantum layers = {n_q}",
    ]
    if n_q:
        log.append(f"quantum circuit parameters per layer = {per_layer} "
                   f"(3 * {config.q_layers} layers * {config.q_qubits} "
                   f"qubits)")
    for epoch, mean in enumerate(epoch_means, start=1):
        log.append(f"epoch {epoch}: mean total loss = {_f(mean)}")
    (out / "train_vae_log.txt").write_text("\n".join(log) + "\n")


# ---- train-ddpm --------------------------------------------------------

SCHEMA_TRAIN_DDPM = [
    _SEED,
    Field("data", str, "", help="path to a dataset manifest.csv"),
    Field("vae_checkpoint", str, "", help="trained VAE (.qldm)"),
    Field("epochs", int, 2, help="training epochs"),
    Field("batch_size", int, 16, help="latents per step"),
    Field("learning_rate", float, 1e-3, help="Adam learning rate"),
    Field("base_channels", int, 32, help="UNet stem width"),
    Field("time_dim", int, 64, help="time embedding width"),
    Field("timesteps", int, 1000, help="diffusion steps T"),
    Field("beta_start", float, 1e-4, help="first beta"),
    Field("beta_end", float, 0.02, help="last beta"),
    Field("quarter_train", bool, False, help="keep every 4th train row"),
    Field("max_images", int, 0, help="cap train images (0 = all)"),
] + _QUANTUM_FIELDS


def check_train_ddpm(cfg: dict, out: Path) -> dict:
    if cfg["epochs"] < 1 or cfg["batch_size"] < 1:
        raise ValueError("epochs and batch_size must be >= 1")
    if cfg["learning_rate"] <= 0:
        raise ValueError("learning_rate: must be > 0")
    vae_path = _require_file(cfg["vae_checkpoint"], "vae_checkpoint")
    vae = _vae_from_checkpoint(_load_model_checkpoint(vae_path, "vae"))
    images, labels = _load_images_for_training(cfg)
    if images.shape[2] != vae.config.image_size:
        raise ValueError(
            f"dataset images are {images.shape[2]}px but the autoencoder "
            f"was trained at {vae.config.image_size}px")
    schedule = build_schedule(cfg["timesteps"], cfg["beta_start"],
                              cfg["beta_end"])
    config = UNetConfig(
        latent_channels=vae.config.latent_channels,
        latent_size=vae.config.latent_size,
        base_channels=cfg["base_channels"], time_dim=cfg["time_dim"],
        num_classes=3, quantum=cfg["quantum"], q_qubits=cfg["q_qubits"],
        q_layers=cfg["q_layers"], q_kind=_parse_kinds(cfg["q_kind"])[0])
    return {"vae": vae, "images": images, "labels": labels,
            "schedule": schedule, "config": config}


def run_train_ddpm(cfg: dict, out: Path, ctx: dict) -> None:
    vae, images, labels = ctx["vae"], ctx["images"], ctx["labels"]
    schedule, config = ctx["schedule"], ctx["config"]
    rng = np.random.default_rng(cfg["seed"])
    latents = encode_dataset(vae, images)
    scale = latent_scale(latents)
    z = latents * scale
    model = UNet(config, seed=cfg["seed"])
    optimizer = Adam(model.parameters(), lr=cfg["learning_rate"])
    baseline = zero_prediction_baseline(
        z[:min(64, z.shape[0])], schedule,
        np.random.default_rng(cfg["seed"] + 1))
    echo = {
        "latent_channels": config.latent_channels,
        "latent_size": config.latent_size,
        "base_channels": config.base_channels,
        "time_dim": config.time_dim, "num_classes": config.num_classes,
        "quantum": config.quantum, "q_qubits": config.q_qubits,
        "q_layers": config.q_layers, "q_kind": config.q_kind.value,
        "timesteps": cfg["timesteps"], "beta_start": cfg["beta_start"],
        "beta_end": cfg["beta_end"], "latent_scale": scale,
        "image_size": vae.config.image_size,
    }
    n = z.shape[0]
    rows = []
    epoch_means = []
    step = 0
    for epoch in range(1, cfg["epochs"] + 1):
        perm = rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg["batch_size"]):
            idx = perm[lo:lo + cfg["batch_size"]]
            loss = ddpm_train_step(model, optimizer, z[idx], labels[idx],
                                   schedule, rng)
            step += 1
            losses.append(loss)
            rows.append([epoch, step, _f(loss)])
        epoch_means.append(float(np.mean(losses)))
        save_checkpoint(out / f"ddpm_ep{epoch}.qldm", "unet", echo,
                        state_dict(model))
    save_checkpoint(out / "ddpm.qldm", "unet", echo, state_dict(model))
    _write_csv(out / "ddpm_loss.csv", ["epoch", "step", "loss"], rows)
    write_line_plot(
        out / "ddpm_loss.svg",
        [LineSeries("loss", tuple(range(1, step + 1)),
                    tuple(float(r[2]) for r in rows)),
         LineSeries("zero baseline", (1, step),
                    (baseline, baseline))],
        title="noise prediction loss", xlabel="step", ylabel="mse")
    n_q, per_layer = _quantum_layer_report(model)
    log = [
        f"train latents = {n}",
        f"latent scale = {_f(scale)}",
        f"model parameters = {model.parameter_count()}",
        f"quantum layers = {n_q}",
        f"zero-prediction baseline = {_f(baseline)}",
    ]
    if n_q:
        log.append(f"quantum circuit parameters per layer = {per_layer} "
                   f"(3 * {config.q_layers} layers * {config.q_qubits} "
                   f"qubits)")
    for epoch, mean in enumerate(epoch_means, start=1):
        log.append(f"epoch {epoch}: mean loss = {_f(mean)}")
    log.append(f"final epoch loss / baseline = "
               f"{_f(epoch_means[-1] / baseline)}")
    (out / "train_ddpm_log.txt").write_text("\n".join(log) + "\n")


# ---- sample ------------------------------------------------------------

SCHEMA_SAMPLE = [
    _SEED,
    Field("vae_checkpoint", str, "", help="trained VAE (.qldm)"),
    Field("ddpm_checkpoint", str, "", help="trained UNet (.qldm)"),
    Field("n_per_class", int, 4, help="images per class per alpha"),
    Field("steps", int, 100, help="sampling steps"),
    Field("alphas", str, "0", help="comma list of readout error rates"),
    Field("shots", int, 1000, help="shots for the sampled quantum path"),
    Field("trajectories", int, 50, help="Pauli trajectories per run"),
    Field("p1", float, 0.0, help="one-qubit gate error while sampling"),
    Field("p2", float, 0.0, help="two-qubit gate error while sampling"),
    Field("mitigate", bool, False, help="apply confusion-matrix mitigation"),
    Field("batch_size", int, 16, help="sampling batch size"),
]


def check_sample(cfg: dict, out: Path) -> dict:
    vae_path = _require_file(cfg["vae_checkpoint"], "vae_checkpoint")
    ddpm_path = _require_file(cfg["ddpm_checkpoint"], "ddpm_checkpoint")
    vae = _vae_from_checkpoint(_load_model_checkpoint(vae_path, "vae"))
    unet, echo = _unet_from_checkpoint(
        _load_model_checkpoint(ddpm_path, "unet"))
    if unet.config.latent_size != vae.config.latent_size \
            or unet.config.latent_channels != vae.config.latent_channels:
        raise ValueError("checkpoint mismatch: the UNet latent geometry "
                         "does not match the autoencoder")
    alphas = _parse_floats(cfg["alphas"])
    if not alphas or any(not 0 <= a < 0.5 for a in alphas):
        raise ValueError("alphas: values must lie in [0, 0.5)")
    if len(set(alphas)) != len(alphas):
        raise ValueError("alphas: duplicate values")
    if cfg["n_per_class"] < 1:
        raise ValueError("n_per_class: must be >= 1")
    if cfg["steps"] < 2:
        raise ValueError("steps: must be >= 2")
    if cfg["shots"] < cfg["trajectories"]:
        raise ValueError("shots: must be >= trajectories")
    schedule = build_schedule(echo["timesteps"], echo["beta_start"],
                              echo["beta_end"])
    return {"vae": vae, "unet": unet, "schedule": schedule,
            "scale": echo["latent_scale"], "alphas": alphas}


def run_sample(cfg: dict, out: Path, ctx: dict) -> None:
    vae, unet = ctx["vae"], ctx["unet"]
    schedule, scale = ctx["schedule"], ctx["scale"]
    k = cfg["n_per_class"]
    num_classes = unet.config.num_classes
    labels = np.repeat(np.arange(num_classes), k)
    n = labels.size
    manifest_rows = []
    for a_idx, alpha in enumerate(ctx["alphas"]):
        if alpha > 0:
            noise = NoiseModel(readout_alpha=alpha, p1=cfg["p1"],
                               p2=cfg["p2"],
                               trajectories=cfg["trajectories"])
            settings = SamplingSettings(cfg["shots"], noise,
                                        seed=cfg["seed"] + 7919 * a_idx,
                                        mitigate=cfg["mitigate"])
        else:
            settings = None
        for model in (vae, unet):
            set_sampling(model, settings)
        rng = np.random.default_rng(
            np.random.SeedSequence((cfg["seed"], a_idx)))
        images = generate_images(vae, unet, schedule, n, labels, rng,
                                 scale, steps=cfg["steps"],
                                 batch_size=cfg["batch_size"])
        tag = _alpha_tag(alpha)
        set_dir = out / "samples" / tag
        set_dir.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            name = f"img_c{labels[i]}_{i:03d}.ppm"
            write_ppm(set_dir / name, images[i].transpose(1, 2, 0))
            manifest_rows.append([f"{alpha:g}", f"samples/{tag}/{name}",
                                  int(labels[i])])
    for model in (vae, unet):
        set_sampling(model, None)
    _write_csv(out / "samples.csv", ["alpha", "filename", "label"],
               manifest_rows)
    (out / "sample_log.txt").write_text(
        f"alphas = {cfg['alphas']}\n"
        f"images per alpha = {n}\n"
        f"sampling steps = {cfg['steps']}\n")


# ---- evaluate ----------------------------------------------------------

SCHEMA_EVALUATE = [
    _SEED,
    Field("data", str, "", help="path to the real dataset manifest.csv"),
    Field("split", str, "test", choices=("train", "val", "test"),
          help="real split to compare against"),
    Field("generated", str, "", help="path to a samples.csv manifest"),
] + _EVAL_FIELDS


def _load_generated(manifest_path: Path) -> dict[str, list[dict]]:
    groups: dict[str, list[dict]] = {}
    with open(manifest_path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"alpha", "filename", "label"}
        if reader.fieldnames is None \
                or not required.issubset(reader.fieldnames):
            raise ValueError(
                f"{manifest_path}: expected columns alpha,filename,label")
        for row in reader:
            groups.setdefault(row["alpha"], []).append(row)
    if not groups:
        raise ValueError(f"{manifest_path}: no generated rows")
    return groups


def check_evaluate(cfg: dict, out: Path) -> dict:
    real_manifest = _require_file(cfg["data"], "data")
    gen_manifest = _require_file(cfg["generated"], "generated")
    real_images, real_labels = load_split(real_manifest, cfg["split"])
    groups = _load_generated(gen_manifest)
    root = gen_manifest.parent
    loaded = {}
    for alpha, rows in groups.items():
        images = np.stack([
            read_ppm(root / r["filename"]).transpose(2, 0, 1)
            for r in rows])
        labels = np.array([int(r["label"]) for r in rows])
        if images.shape[1:] != real_images.shape[1:]:
            raise ValueError(
                f"generated images {images.shape[1:]} do not match real "
                f"images {real_images.shape[1:]}")
        loaded[alpha] = (images, labels)
    if cfg["knn_k"] < 1:
        raise ValueError("knn_k: must be >= 1")
    return {"real_images": real_images, "real_labels": real_labels,
            "generated": loaded}


def _match_class_proportions(real_images, real_labels, gen_labels,
                             rng: np.random.Generator,
                             warnings: list[str]) -> np.ndarray:
    """Real subset whose class counts mirror the generated set."""
    picks = []
    for cls in np.unique(gen_labels):
        need = int(np.sum(gen_labels == cls))
        have = np.flatnonzero(real_labels == cls)
        if have.size < need:
            warnings.append(
                f"class {cls}: only {have.size} real images for "
                f"{need} generated; using all {have.size}")
            picks.append(have)
        else:
            picks.append(rng.permutation(have)[:need])
    return real_images[np.sort(np.concatenate(picks))]


def run_evaluate(cfg: dict, out: Path, ctx: dict) -> None:
    rows = []
    warnings: list[str] = []
    alphas = sorted(ctx["generated"], key=float)
    for alpha in alphas:
        gen_images, gen_labels = ctx["generated"][alpha]
        rng = np.random.default_rng(cfg["seed"])
        real = _match_class_proportions(
            ctx["real_images"], ctx["real_labels"], gen_labels, rng,
            warnings)
        report = evaluate_sets(real, gen_images,
                               method=cfg["embed_method"],
                               seed=cfg["seed"], k=cfg["knn_k"])
        rows.append([alpha, real.shape[0], gen_images.shape[0]]
                    + report.csv_row())
    _write_csv(out / "metrics.csv",
               ["alpha", "n_real", "n_generated",
                *MetricReport.CSV_HEADER], rows)
    log = [f"alphas evaluated = {', '.join(alphas)}"]
    log += [f"warning: {w}" for w in warnings]
    (out / "evaluate_log.txt").write_text("\n".join(log) + "\n")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)


# ---- compare-models ----------------------------------------------------

SCHEMA_COMPARE_BASE = [
    _SEED,
    Field("data", str, "", help="path to the real dataset manifest.csv"),
    Field("split", str, "test", choices=("train", "val", "test"),
          help="real split to compare against"),
    Field("variants", str, "", help="comma list of variant names"),
    Field("n_per_class", int, 4, help="samples per class per variant"),
    Field("steps", int, 50, help="sampling steps"),
] + _EVAL_FIELDS


def _compare_schema(raw: dict[str, str]) -> list[Field]:
    names = [tok.strip() for tok in raw.get("variants", "").split(",")
             if tok.strip()]
    schema = list(SCHEMA_COMPARE_BASE)
    for name in names:
        schema.append(Field(f"{name}_vae", str, "",
                            help=f"VAE checkpoint for variant {name}"))
        schema.append(Field(f"{name}_ddpm", str, "",
                            help=f"UNet checkpoint for variant {name}"))
        schema.append(Field(f"{name}_cdcnn_nodes", int, 0,
                            help="report a CDCNN stand-in of this width"))
    return schema


def check_compare(cfg: dict, out: Path) -> dict:
    names = [tok.strip() for tok in cfg["variants"].split(",")
             if tok.strip()]
    if not names:
        raise ValueError("variants: need at least one name")
    real_manifest = _require_file(cfg["data"], "data")
    real_images, real_labels = load_split(real_manifest, cfg["split"])
    variants = {}
    for name in names:
        vae_text = cfg[f"{name}_vae"]
        ddpm_text = cfg[f"{name}_ddpm"]
        if not vae_text or not Path(vae_text).is_file():
            raise ValueError(
                f"variant {name}: missing VAE checkpoint {vae_text!r}")
        if not ddpm_text or not Path(ddpm_text).is_file():
            raise ValueError(
                f"variant {name}: missing UNet checkpoint {ddpm_text!r}")
        vae = _vae_from_checkpoint(
            _load_model_checkpoint(Path(vae_text), "vae"))
        unet, echo = _unet_from_checkpoint(
            _load_model_checkpoint(Path(ddpm_text), "unet"))
        variants[name] = (vae, unet, echo)
    return {"names": names, "variants": variants,
            "real_images": real_images, "real_labels": real_labels}


def run_compare(cfg: dict, out: Path, ctx: dict) -> None:
    rows = []
    warnings: list[str] = []
    for name in ctx["names"]:
        vae, unet, echo = ctx["variants"][name]
        schedule = build_schedule(echo["timesteps"], echo["beta_start"],
                                  echo["beta_end"])
        k = cfg["n_per_class"]
        labels = np.repeat(np.arange(unet.config.num_classes), k)
        rng = np.random.default_rng(cfg["seed"])
        images = generate_images(vae, unet, schedule, labels.size, labels,
                                 rng, echo["latent_scale"],
                                 steps=cfg["steps"])
        real = _match_class_proportions(
            ctx["real_images"], ctx["real_labels"], labels,
            np.random.default_rng(cfg["seed"]), warnings)
        report = evaluate_sets(real, images, method=cfg["embed_method"],
                               seed=cfg["seed"], k=cfg["knn_k"])
        n_q_vae, per_layer_vae = _quantum_layer_report(vae)
        n_q_unet, per_layer_unet = _quantum_layer_report(unet)
        per_layer = max(per_layer_vae, per_layer_unet)
        nodes = cfg[f"{name}_cdcnn_nodes"]
        rows.append([
            name, vae.parameter_count(), unet.parameter_count(),
            n_q_vae + n_q_unet, per_layer, 4 * nodes ** 4,
            *report.csv_row()])
    _write_csv(out / "compare_models.csv",
               ["variant", "vae_params", "unet_params", "quantum_layers",
                "quantum_params_per_layer", "cdcnn_added_params",
                *MetricReport.CSV_HEADER], rows)
    log = [f"variants = {', '.join(ctx['names'])}"]
    log += [f"warning: {w}" for w in warnings]
    (out / "compare_models_log.txt").write_text("\n".join(log) + "\n")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)


# ---- driver ------------------------------------------------------------

COMMANDS = {
    "ansatz-bench": (SCHEMA_BENCH, check_bench, run_bench),
    "make-dataset": (SCHEMA_MAKE_DATASET, check_make_dataset,
                     run_make_dataset),
    "train-vae": (SCHEMA_TRAIN_VAE, check_train_vae, run_train_vae),
    "train-ddpm": (SCHEMA_TRAIN_DDPM, check_train_ddpm, run_train_ddpm),
    "sample": (SCHEMA_SAMPLE, check_sample, run_sample),
    "evaluate": (SCHEMA_EVALUATE, check_evaluate, run_evaluate),
    "compare-models": (None, check_compare, run_compare),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qlatent",
                     description="hybrid latent diffusion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default=None,
                         help="INI config file (key = value)")
        cmd.add_argument("--set", action="append", default=[],
                         metavar="KEY=VALUE", dest="overrides",
                         help="override one config key")
        cmd.add_argument("--out", required=True,
                         help="output directory (all writes go here)")
    return parser


def _resolve_command_config(command: str, config_path,
                            overrides: list[str]) -> dict:
    file_values = load_config_file(config_path) if config_path else {}
    override_values = parse_overrides(overrides)
    schema, _, _ = COMMANDS[command]
    if schema is None:
        merged = dict(file_values)
        merged.update(override_values)
        schema = _compare_schema(merged)
    return resolve(schema, file_values, override_values)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    started = time.time()
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    _, check, run = COMMANDS[args.command]
    try:
        cfg = _resolve_command_config(args.command, args.config,
                                      args.overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        ctx = check(cfg, out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    tag = args.command.replace("-", "_")
    (out / f"{tag}_config.txt").write_text(render_resolved(cfg))
    try:
        run(cfg, out, ctx)
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 2
    (out / f"{tag}_runinfo.txt").write_text(
        f"started = {stamp}\n"
        f"duration_seconds = {time.time() - started:.3f}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
